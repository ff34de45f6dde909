#include "memrec/experiment.hpp"

#include "memrec/error.hpp"
#include "memrec/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace memrec {

using ojson = nlohmann::ordered_json;

const std::vector<std::string>& VariantSpec::names() {
    static const std::vector<std::string> n{"base", "wo_um", "wo_ck", "wo_rg", "manual_rg", "wo_gm", "all", "rand", "sim", "ours"};
    return n;
}

VariantSpec VariantSpec::named(std::string_view name) {
    VariantSpec v;
    v.label = std::string(name);
    if (name == "base" || name == "ours") {
    } else if (name == "wo_um") {
        v.without_um = true;
    } else if (name == "wo_ck") {
        v.without_ck = true;
    } else if (name == "wo_rg") {
        v.without_rg = true;
    } else if (name == "manual_rg") {
        v.manual_rg = true;
    } else if (name == "wo_gm") {
        v.without_ck = true;
        v.without_rg = true;
    } else if (name == "all") {
        v.memory_mode = MemoryMode::All;
    } else if (name == "rand") {
        v.memory_mode = MemoryMode::Rand;
    } else if (name == "sim") {
        v.memory_mode = MemoryMode::Sim;
    } else {
        throw Error(ErrorKind::UnknownVariant, "unknown variant: " + std::string(name));
    }
    return v;
}

void VariantSpec::validate() const {
    if (manual_rg && without_rg) throw Error(ErrorKind::InvalidArgument, "manual_rg and without_rg are mutually exclusive");
}

PointScores score_target(std::span<const std::string> ranked, const std::string& target) {
    const std::set<std::string> truth{target};
    PointScores s;
    for (std::size_t c = 0; c < kMetricCuts.size(); ++c) {
        const std::size_t k = kMetricCuts[c];
        s.hr[c] = hit_rate_at_k(ranked, truth, k);
        s.mrr[c] = mrr_at_k(ranked, truth, k);
        s.ndcg[c] = ndcg_at_k(ranked, truth, k);
        if (!(s.hr[c] >= s.ndcg[c] && s.ndcg[c] >= s.mrr[c]))
            throw std::logic_error("metric ordering violated at cut " + std::to_string(k) + " for target " + target);
        if (c > 0 && (s.hr[c] < s.hr[c - 1] || s.mrr[c] < s.mrr[c - 1] || s.ndcg[c] < s.ndcg[c - 1]))
            throw std::logic_error("metric not monotone in K at cut " + std::to_string(k) + " for target " + target);
    }
    return s;
}

std::map<std::string, MemoryBank> build_banks(const Corpus& corpus, LanguageModelPort& llm, const TemplateSet& templates,
                                              BankBuildReport* report) {
    std::map<std::string, MemoryBank> banks;
    BankBuildReport r;
    for (const auto& [uid, user] : corpus.users) {
        MemoryBank bank(uid);
        for (const auto& session : user.sessions) {
            if (corpus.split_of(session.session_id) != Split::Train) continue;
            auto add = extract_and_add(bank, session, llm, templates);
            ++r.sessions;
            if (add.skipped) ++r.skipped_sessions;
        }
        r.entities += bank.size();
        banks.emplace(uid, std::move(bank));
    }
    if (report) *report = r;
    return banks;
}

namespace {

struct Sample {
    std::string user_id;
    bool warm = false;
    PointScores scores;
};

MetricSummary summarize(const std::vector<const Sample*>& samples, bool per_user) {
    MetricSummary out;
    out.samples = samples.size();
    if (samples.empty()) return out;
    auto mean_of = [](const std::vector<const Sample*>& list) {
        PointScores sum;
        for (const auto* s : list) {
            for (std::size_t c = 0; c < kMetricCuts.size(); ++c) {
                sum.hr[c] += s->scores.hr[c];
                sum.mrr[c] += s->scores.mrr[c];
                sum.ndcg[c] += s->scores.ndcg[c];
            }
        }
        const auto n = static_cast<double>(list.size());
        for (std::size_t c = 0; c < kMetricCuts.size(); ++c) {
            sum.hr[c] /= n;
            sum.mrr[c] /= n;
            sum.ndcg[c] /= n;
        }
        return sum;
    };
    auto store = [&out](const PointScores& s) {
        out.hr = s.hr;
        out.mrr = s.mrr;
        out.ndcg = s.ndcg;
    };
    if (!per_user) {
        store(mean_of(samples));
        return out;
    }
    std::map<std::string, std::vector<const Sample*>> by_user;
    for (const auto* s : samples) by_user[s->user_id].push_back(s);
    std::vector<Sample> user_means;
    for (const auto& [uid, list] : by_user) {
        Sample m;
        m.user_id = uid;
        m.scores = mean_of(list);
        user_means.push_back(std::move(m));
    }
    std::vector<const Sample*> ptrs;
    for (const auto& m : user_means) ptrs.push_back(&m);
    store(mean_of(ptrs));
    return out;
}

std::size_t entry_tokens(const std::string& entity, const std::string& attitude) {
    return count_tokens(entity) + count_tokens(attitude);
}

// Used when the model is unreachable: expert candidates, then catalog order.
RecommendationResult fallback_result(const EvaluationPoint& point, const Catalog& catalog, const std::vector<std::string>& expert,
                                     std::size_t list_length) {
    RecommendationResult r;
    r.degraded = true;
    auto mentioned = mentioned_items(point.context);
    std::set<std::string> used(mentioned.begin(), mentioned.end());
    auto push = [&](const std::string& id) {
        if (r.items.size() < list_length && used.insert(id).second) {
            r.items.push_back(id);
            r.provenance.push_back(Provenance::FallbackPad);
        }
    };
    for (const auto& id : expert) push(id);
    for (const auto& [id, _] : catalog.items()) push(id);
    return r;
}

}  // namespace

EvalReport run_experiment(const Corpus& input, const VariantSpec& variant, const ExperimentConfig& cfg, const ExperimentPorts& ports,
                          const RunLogSink& runlog, const std::map<std::string, MemoryBank>* prebuilt) {
    variant.validate();
    cfg.pipeline.retrieval.validate();
    if (cfg.pipeline.list_length < 1) throw Error(ErrorKind::InvalidArgument, "list_length must be at least 1");

    Corpus corpus = input;
    filter_duplicate_targets(corpus);

    EvalReport report;
    report.variant = variant.label;
    report.spec = variant;
    report.aggregation = cfg.per_user_mean ? "per_user" : "per_point";

    std::map<std::string, MemoryBank> banks;
    if (!variant.without_um) banks = prebuilt ? *prebuilt : build_banks(corpus, ports.llm, ports.templates);

    // Warm users have at least one Train session.
    std::set<std::string> warm_users;
    for (const auto& [uid, user] : corpus.users) {
        for (const auto& s : user.sessions) {
            if (corpus.split_of(s.session_id) == Split::Train) {
                warm_users.insert(uid);
                break;
            }
        }
    }

    GuidelineSet guidelines = seed_manual_guidelines();
    guidelines.cap = cfg.guideline_cap;

    PipelineSwitches switches;
    switches.use_memory = !variant.without_um;
    switches.use_expert = !variant.without_ck;
    switches.use_guidelines = !variant.without_rg;
    switches.memory_mode = variant.memory_mode;
    const PipelinePorts pports{ports.llm, ports.embedder, ports.expert, ports.templates};

    // Token totals use the bank as built, before evaluation touches it.
    std::map<std::string, std::size_t> um_tokens;
    for (const auto& [uid, bank] : banks) {
        std::size_t n = 0;
        for (const auto& [key, e] : bank.entries()) n += entry_tokens(e.entity, e.attitude);
        um_tokens[uid] = n;
    }

    const auto points = evaluation_points(corpus, Split::Test);
    std::vector<Sample> samples;
    std::map<std::string, std::pair<std::size_t, std::size_t>> retrieved_tokens;  // user -> (sum, points)
    double precision_sum = 0.0;
    std::size_t since_reflect = 0;

    for (const auto& point : points) {
        ++report.points;
        const bool warm = warm_users.count(point.user_id) != 0;
        MemoryBank* bank = nullptr;
        if (auto it = banks.find(point.user_id); it != banks.end()) bank = &it->second;

        PipelineOutput out;
        bool failed = false;
        try {
            out = run_pipeline(point, corpus.catalog, bank, guidelines, pports, cfg.pipeline, switches);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::LlmUnavailable) throw;
            failed = true;
            if (switches.use_expert && ports.expert) {
                ExpertQuery q{point.user_id, point.session_id, point.turn_index, point.context};
                out.expert = expert_candidates(*ports.expert, q, corpus.catalog);
            }
            out.expert_block = render_expert_block(out.expert, corpus.catalog);
            out.result = fallback_result(point, corpus.catalog, out.expert, cfg.pipeline.list_length);
        }
        if (failed) ++report.failed_points;
        if (failed || out.result.degraded || out.retrieved.degraded) ++report.degraded_points;
        report.rejected_entities += out.retrieved.rejected.size();

        std::size_t rt = 0;
        for (std::size_t i = 0; i < out.retrieved.entities.size(); ++i)
            rt += entry_tokens(out.retrieved.entities[i], out.retrieved.attitudes[i]);
        auto& acc = retrieved_tokens[point.user_id];
        acc.first += rt;
        acc.second += 1;

        if (switches.use_memory && warm && !point.relevant_entities.empty()) {
            std::set<std::string> relevant;
            for (const auto& r : point.relevant_entities) relevant.insert(canonicalize(r));
            std::size_t hits = 0;
            for (const auto& e : out.retrieved.entities) hits += relevant.count(e);
            precision_sum += out.retrieved.entities.empty()
                                 ? 0.0
                                 : static_cast<double>(hits) / static_cast<double>(out.retrieved.entities.size());
            ++report.precision_points;
        }

        bool hit = false;
        for (const auto& target : point.ground_truth) {
            Sample s{point.user_id, warm, score_target(out.result.items, target)};
            if (s.scores.hr.back() > 0.0) hit = true;
            samples.push_back(std::move(s));
        }

        if (runlog) {
            ojson line;
            line["point"] = {{"user_id", point.user_id}, {"session_id", point.session_id}, {"turn_index", point.turn_index}};
            line["items"] = out.result.items;
            ojson prov = ojson::array();
            for (auto p : out.result.provenance) prov.push_back(std::string(to_string(p)));
            line["provenance"] = prov;
            line["retrieved_entities"] = out.retrieved.entities;
            line["expert_block"] = out.expert_block;
            line["ground_truth"] = point.ground_truth;
            line["hit"] = hit;
            line["degraded"] = failed || out.result.degraded || out.retrieved.degraded;
            line["trajectory"] = out.result.trajectory;
            runlog(line.dump());
        }

        if (variant.reflective() && !failed && cfg.reflect_every > 0 && ++since_reflect >= cfg.reflect_every) {
            since_reflect = 0;
            ReflectionRecord rec{out.result.trajectory, hit ? Outcome::Hit : Outcome::Miss, {}};
            try {
                auto res = reflect(guidelines, rec, ports.llm, ports.templates);
                guidelines = std::move(res.guidelines);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::LlmUnavailable) throw;
            }
        }
    }

    std::vector<const Sample*> all, warm, cold;
    for (const auto& s : samples) {
        all.push_back(&s);
        (s.warm ? warm : cold).push_back(&s);
    }
    report.all = summarize(all, cfg.per_user_mean);
    report.warm = summarize(warm, cfg.per_user_mean);
    report.cold = summarize(cold, cfg.per_user_mean);

    std::set<std::string> test_users;
    for (const auto& p : points) test_users.insert(p.user_id);
    for (const auto& uid : test_users) (warm_users.count(uid) ? report.warm_users : report.cold_users) += 1;

    if (!test_users.empty()) {
        double dialogues = 0.0, um = 0.0, retrieved = 0.0;
        for (const auto& uid : test_users) {
            std::size_t d = 0;
            for (const auto& s : corpus.users.at(uid).sessions) {
                if (corpus.split_of(s.session_id) != Split::Train) continue;
                for (const auto& u : s.utterances) d += count_tokens(u.text);
            }
            dialogues += static_cast<double>(d);
            if (auto it = um_tokens.find(uid); it != um_tokens.end()) um += static_cast<double>(it->second);
            const auto& [sum, n] = retrieved_tokens[uid];
            if (n) retrieved += static_cast<double>(sum) / static_cast<double>(n);
        }
        const double nu = static_cast<double>(test_users.size());
        report.tokens = {dialogues / nu, um / nu, retrieved / nu, test_users.size()};
    }
    if (report.precision_points)
        report.retrieval_precision = precision_sum / static_cast<double>(report.precision_points);
    report.guidelines_version = guidelines.version;
    report.guidelines_size = guidelines.guidelines.size();
    return report;
}

namespace {

ojson summary_json(const MetricSummary& m) {
    ojson j;
    j["samples"] = m.samples;
    for (std::size_t c = 0; c < kMetricCuts.size(); ++c) j["HR@" + std::to_string(kMetricCuts[c])] = m.hr[c];
    for (std::size_t c = 0; c < kMetricCuts.size(); ++c) j["MRR@" + std::to_string(kMetricCuts[c])] = m.mrr[c];
    for (std::size_t c = 0; c < kMetricCuts.size(); ++c) j["NDCG@" + std::to_string(kMetricCuts[c])] = m.ndcg[c];
    return j;
}

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string pad(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
}

std::vector<double> metric_row(const MetricSummary& m) {
    std::vector<double> v;
    for (double x : m.hr) v.push_back(x);
    for (double x : m.mrr) v.push_back(x);
    for (double x : m.ndcg) v.push_back(x);
    return v;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
    ojson j;
    j["variant"] = r.variant;
    j["flags"] = {{"without_um", r.spec.without_um},
                  {"without_ck", r.spec.without_ck},
                  {"without_rg", r.spec.without_rg},
                  {"manual_rg", r.spec.manual_rg},
                  {"memory_mode", std::string(to_string(r.spec.memory_mode))}};
    j["cuts"] = r.cuts;
    j["points"] = r.points;
    j["degraded_points"] = r.degraded_points;
    j["failed_points"] = r.failed_points;
    j["aggregation"] = r.aggregation;
    j["groups"] = {{"all", summary_json(r.all)}, {"warm", summary_json(r.warm)}, {"cold", summary_json(r.cold)}};
    j["warm_users"] = r.warm_users;
    j["cold_users"] = r.cold_users;
    j["tokens"] = {{"users", r.tokens.users},
                   {"total_dialogues", r.tokens.total_dialogues},
                   {"total_um", r.tokens.total_um},
                   {"retrieved", r.tokens.retrieved},
                   {"rule", r.token_rule}};
    j["retrieval_precision"] = r.retrieval_precision;
    j["precision_points"] = r.precision_points;
    j["rejected_entities"] = r.rejected_entities;
    j["guidelines"] = {{"version", r.guidelines_version}, {"size", r.guidelines_size}};
    return j.dump(2) + "\n";
}

Comparison compare_reports(std::span<const EvalReport> reports) {
    Comparison out;
    if (reports.empty()) return out;
    for (const auto& r : reports) {
        if (r.cuts != reports.front().cuts) throw Error(ErrorKind::MismatchedCuts, "reports use different metric cuts: " + r.variant);
    }
    std::vector<std::string> cols;
    for (const char* m : {"HR", "MRR", "NDCG"})
        for (auto k : reports.front().cuts) cols.push_back(std::string(m) + "@" + std::to_string(k));

    std::size_t vw = 8;
    for (const auto& r : reports) vw = std::max(vw, r.variant.size() + 2);

    out.csv = "variant,group,kind,samples";
    for (const auto& c : cols) out.csv += "," + c;
    out.csv += "\n";

    std::string header = pad("variant", vw) + pad("group", 7) + pad("n", 7);
    for (const auto& c : cols) header += pad(c, 9);
    out.text = header + "\n";

    const std::pair<const char*, MetricSummary EvalReport::*> groups[] = {
        {"all", &EvalReport::all}, {"warm", &EvalReport::warm}, {"cold", &EvalReport::cold}};
    for (const auto& [gname, member] : groups) {
        const auto base = metric_row(reports.front().*member);
        for (const auto& r : reports) {
            const auto& m = r.*member;
            const auto row = metric_row(m);
            std::string line = pad(r.variant, vw) + pad(gname, 7) + pad(std::to_string(m.samples), 7);
            std::string csv_value = r.variant + "," + gname + ",value," + std::to_string(m.samples);
            std::string csv_delta = r.variant + "," + gname + ",delta," + std::to_string(m.samples);
            for (std::size_t i = 0; i < row.size(); ++i) {
                line += pad(fixed4(row[i]), 9);
                csv_value += "," + shortest(row[i]);
                csv_delta += "," + shortest(row[i] - base[i]);
            }
            out.text += line + "\n";
            out.csv += csv_value + "\n" + csv_delta + "\n";
        }
    }

    out.text += "\n" + pad("variant", vw) + pad("dialogues", 12) + pad("memory", 12) + pad("retrieved", 12) + "precision\n";
    for (const auto& r : reports) {
        out.text += pad(r.variant, vw) + pad(fixed2(r.tokens.total_dialogues), 12) + pad(fixed2(r.tokens.total_um), 12) +
                    pad(fixed2(r.tokens.retrieved), 12) + fixed4(r.retrieval_precision) + "\n";
    }
    return out;
}

}  // namespace memrec
