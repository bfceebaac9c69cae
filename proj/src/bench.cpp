#include "slidebench/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "slidebench/error.hpp"
#include "slidebench/rng.hpp"

namespace slidebench {

// ---------------------------------------------------------------------------
// Splits

std::array<std::size_t, 3> split_counts(std::size_t patients, const SplitRatios& ratios) {
    if (patients < 3) fail(ErrorCode::TooFewPatients, "need at least 3 patients, have " + std::to_string(patients));
    const double r[3] = {ratios.train, ratios.val, ratios.test};
    if (!(r[0] > 0 && r[1] > 0 && r[2] > 0)) fail(ErrorCode::InvalidArgument, "split ratios must be positive");
    const double total = r[0] + r[1] + r[2];
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double quota = static_cast<double>(patients) * r[i] / total;
        counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(quota));
        frac[static_cast<std::size_t>(i)] = quota - std::floor(quota);
        assigned += counts[static_cast<std::size_t>(i)];
    }
    // Largest remainder; ties go to the earlier subset.
    while (assigned < patients) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i) {
            if (frac[i] > frac[best]) best = i;
        }
        ++counts[best];
        frac[best] = -1.0;
        ++assigned;
    }
    for (std::size_t i : {std::size_t{1}, std::size_t{2}}) {
        if (counts[i] == 0) {
            const std::size_t donor = counts[0] >= counts[3 - i] ? 0 : 3 - i;
            --counts[donor];
            ++counts[i];
        }
    }
    return counts;
}

SplitAssignment make_splits(const LabelTable& labels, const SplitOptions& options) {
    std::map<std::string, std::vector<std::string>> slides_of;
    std::map<std::string, std::string> stratum_of;
    std::optional<std::size_t> strat_col;
    if (options.stratify_column) {
        strat_col = labels.column_index(*options.stratify_column);
        if (!strat_col) fail(ErrorCode::MalformedConfig, "no label column '" + *options.stratify_column + "' to stratify on");
    }
    for (const auto& row : labels.rows) {
        slides_of[row.patient_id].push_back(row.slide_id);
        if (strat_col && !stratum_of.contains(row.patient_id)) stratum_of[row.patient_id] = row.cells[*strat_col].value_or("");
    }
    std::vector<std::string> patients;
    for (const auto& [p, s] : slides_of) patients.push_back(p);
    const auto counts = split_counts(patients.size(), options.ratios);

    SplitAssignment out;
    out.seed = options.seed;
    out.ratios = options.ratios;
    CounterRng rng(options.seed);
    portable_shuffle(std::span<std::string>(patients), rng);

    auto deal = [&](const std::vector<std::string>& order, std::array<std::size_t, 3> c) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            const Subset s = i < c[0] ? Subset::Train : (i < c[0] + c[1] ? Subset::Val : Subset::Test);
            out.by_patient[order[i]] = s;
        }
    };
    if (!strat_col) {
        deal(patients, counts);
    } else {
        // Same apportionment within each stratum, keeping the shuffled order.
        std::map<std::string, std::vector<std::string>> strata;
        for (const auto& p : patients) strata[stratum_of[p]].push_back(p);
        for (const auto& [key, members] : strata) {
            const double total = options.ratios.train + options.ratios.val + options.ratios.test;
            std::array<std::size_t, 3> c{};
            if (members.size() >= 3) {
                c = split_counts(members.size(), options.ratios);
            } else {
                c[0] = static_cast<std::size_t>(std::lround(members.size() * options.ratios.train / total));
                c[2] = members.size() - c[0];
            }
            deal(members, c);
        }
    }
    for (const auto& [p, slides] : slides_of) {
        for (const auto& s : slides) out.by_slide[s] = out.by_patient[p];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

int argmax(std::span<const float> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

double accuracy_percent(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) fail(ErrorCode::InvalidArgument, "prediction/label count mismatch");
    if (truth.empty()) fail(ErrorCode::NoLabeledSlides, "accuracy over zero slides");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorCode::InvalidArgument, "correlation inputs differ in length");
    if (x.size() < 2) return std::nullopt;
    // Single-pass co-moment updates.
    double mx = 0.0, my = 0.0, cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(i + 1);
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        mx += dx / n;
        my += dy / n;
        cxx += dx * (x[i] - mx);
        cyy += dy * (y[i] - my);
        cxy += dx * (y[i] - my);
    }
    if (cxx <= 0.0 || cyy <= 0.0) return std::nullopt;
    return std::clamp(cxy / std::sqrt(cxx * cyy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

std::vector<std::vector<float>> predict(const Checkpoint& ckpt, const FeatureBag& bag) {
    auto f = forward(bag_view(bag), ckpt.params);
    for (std::size_t t = 0; t < ckpt.tasks.size(); ++t) {
        if (ckpt.tasks[t].kind == TaskKind::Regression) {
            const double scale = t < ckpt.target_scale.size() ? ckpt.target_scale[t] : 1.0;
            const double mean = t < ckpt.target_mean.size() ? ckpt.target_mean[t] : 0.0;
            f.outputs[t][0] = static_cast<float>(f.outputs[t][0] * scale + mean);
        }
    }
    return std::move(f.outputs);
}

MetricsReport evaluate_samples(const Checkpoint& ckpt, std::span<const Sample> samples, CorrelationKind correlation) {
    MetricsReport report;
    report.model = to_string(ckpt.kind);
    std::vector<std::vector<std::vector<float>>> outputs;
    outputs.reserve(samples.size());
    for (const auto& s : samples) outputs.push_back(predict(ckpt, *s.bag));

    for (std::size_t t = 0; t < ckpt.tasks.size(); ++t) {
        const auto& task = ckpt.tasks[t];
        MetricEntry e;
        e.task = task.name;
        if (task.kind == TaskKind::Classification) {
            e.metric = "accuracy";
            std::vector<int> pred, truth;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (t >= samples[i].targets.size() || !samples[i].targets[t]) continue;
                pred.push_back(argmax(outputs[i][t]));
                truth.push_back(std::get<int>(*samples[i].targets[t]));
            }
            e.n = truth.size();
            if (truth.empty()) e.error = ErrorCode::NoLabeledSlides;
            else e.value = accuracy_percent(pred, truth);
        } else {
            e.metric = correlation == CorrelationKind::Pearson ? "pearson" : "spearman";
            std::vector<double> pred, truth;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (t >= samples[i].targets.size() || !samples[i].targets[t]) continue;
                pred.push_back(outputs[i][t][0]);
                truth.push_back(std::get<double>(*samples[i].targets[t]));
            }
            e.n = truth.size();
            auto r = correlation == CorrelationKind::Pearson ? pearson(pred, truth) : spearman(pred, truth);
            if (truth.empty()) e.error = ErrorCode::NoLabeledSlides;
            else if (!r) e.error = ErrorCode::ZeroVariance;
            else e.value = *r;
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["seed"] = seed;
    j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
        nlohmann::ordered_json o;
        o["task"] = e.task;
        o["metric"] = e.metric;
        o["value"] = e.value ? nlohmann::ordered_json(*e.value) : nlohmann::ordered_json(nullptr);
        o["error"] = e.error ? nlohmann::ordered_json(std::string(to_string(*e.error))) : nlohmann::ordered_json(nullptr);
        o["n"] = e.n;
        j["entries"].push_back(o);
    }
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    MetricsReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.model = j.at("model").get<std::string>();
        r.seed = j.value("seed", std::uint64_t{0});
        for (const auto& o : j.at("entries")) {
            MetricEntry e;
            e.task = o.at("task").get<std::string>();
            e.metric = o.at("metric").get<std::string>();
            if (!o.at("value").is_null()) e.value = o.at("value").get<double>();
            if (o.contains("error") && !o.at("error").is_null()) {
                const auto err = o.at("error").get<std::string>();
                e.error = err == "NoLabeledSlides" ? ErrorCode::NoLabeledSlides : ErrorCode::ZeroVariance;
            }
            e.n = o.value("n", std::size_t{0});
            r.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedConfig, std::string("metrics file: ") + e.what());
    }
    return r;
}

namespace {

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

BenchTables report(std::span<const MetricsReport> metrics, std::vector<std::string> models, std::vector<std::string> tasks) {
    auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    const bool auto_models = models.empty(), auto_tasks = tasks.empty();
    std::map<std::pair<std::string, std::string>, const MetricEntry*> cells;
    std::map<std::string, std::uint64_t> seeds;
    for (const auto& m : metrics) {
        if (auto_models) add_unique(models, m.model);
        seeds[m.model] = m.seed;
        for (const auto& e : m.entries) {
            if (auto_tasks) add_unique(tasks, e.task);
            cells[{e.task, m.model}] = &e;
        }
    }

    BenchTables out;
    out.markdown = "| Task |";
    std::string rule = "|---|";
    for (const auto& m : models) {
        out.markdown += " " + m + " |";
        rule += "---|";
    }
    out.markdown += "\n" + rule + "\n";
    out.csv = "task,model,metric,value,n,seed\n";

    for (const auto& t : tasks) {
        std::vector<std::string> shown(models.size(), "-");
        std::vector<std::optional<double>> rounded(models.size());
        for (std::size_t i = 0; i < models.size(); ++i) {
            auto it = cells.find({t, models[i]});
            if (it == cells.end()) continue;
            const MetricEntry& e = *it->second;
            if (e.value) {
                shown[i] = fixed(*e.value, e.metric == "accuracy" ? 2 : 3);
                rounded[i] = std::stod(shown[i]);
            } else if (e.error) {
                shown[i] = std::string(to_string(*e.error));
            }
            out.csv += t + "," + models[i] + "," + e.metric + "," + (e.value ? shortest(*e.value) : shown[i]) + "," +
                       std::to_string(e.n) + "," + std::to_string(seeds[models[i]]) + "\n";
        }
        std::optional<double> best;
        for (const auto& r : rounded) {
            if (r && (!best || *r > *best)) best = r;
        }
        out.markdown += "| " + t + " |";
        for (std::size_t i = 0; i < models.size(); ++i) {
            const bool bold = rounded[i] && best && *rounded[i] == *best;
            out.markdown += " " + (bold ? "**" + shown[i] + "**" : shown[i]) + " |";
        }
        out.markdown += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Mean over tasks of accuracy fraction / correlation; ZeroVariance counts as -1.
std::optional<double> selection_score(const MetricsReport& r) {
    double sum = 0.0;
    int n = 0;
    for (const auto& e : r.entries) {
        if (e.error == ErrorCode::NoLabeledSlides) continue;
        if (e.value) sum += e.metric == "accuracy" ? *e.value / 100.0 : *e.value;
        else sum += -1.0;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

}  // namespace

TrainResult train_bags(const std::vector<TaskConfig>& tasks, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainConfig& config, const std::string& embedder_id) {
    if (train.empty()) fail(ErrorCode::NoLabeledSlides, "no training slides");
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const bool any = std::any_of(train.begin(), train.end(), [&](const Sample& s) { return t < s.targets.size() && s.targets[t]; });
        if (!any) fail(ErrorCode::NoLabeledSlides, "task '" + tasks[t].name + "' has no labeled training slides");
    }
    const int dim = static_cast<int>(train.front().bag->dim);
    for (const auto& s : train) {
        if (s.bag->dim != dim) fail(ErrorCode::ShapeMismatch, "slide " + s.slide_id + " has a different feature dimension");
    }

    Checkpoint ck;
    ck.kind = config.kind;
    ck.embedder_id = embedder_id;
    ck.tasks = tasks;
    ck.target_mean.assign(tasks.size(), 0.0);
    ck.target_scale.assign(tasks.size(), 1.0);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].kind != TaskKind::Regression) continue;
        std::vector<double> ys;
        for (const auto& s : train) {
            if (s.targets[t]) ys.push_back(std::get<double>(*s.targets[t]));
        }
        double mean = 0.0;
        for (double y : ys) mean += y;
        mean /= static_cast<double>(ys.size());
        double var = 0.0;
        for (double y : ys) var += (y - mean) * (y - mean);
        var /= static_cast<double>(ys.size());
        ck.target_mean[t] = mean;
        ck.target_scale[t] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    ck.params = build_model<float>(tasks, dim, config.hidden, config.kind, config.seed);

    MILParams<float> params = ck.params;
    AdamState<float> adam(params, config.adam);
    CounterRng order_rng(CounterRng::mix(config.seed ^ 0x6f726465725f7367ULL));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::optional<double> best;
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        portable_shuffle(std::span<std::size_t>(order), order_rng);
        double loss_sum = 0.0;
        for (std::size_t idx : order) {
            const Sample& s = train[idx];
            const auto view = bag_view(*s.bag);
            const auto fwd = forward(view, params);
            std::vector<std::vector<float>> upstream(tasks.size());
            for (std::size_t t = 0; t < tasks.size(); ++t) {
                if (!s.targets[t]) continue;
                if (tasks[t].kind == TaskKind::Classification) {
                    auto lg = loss_ce<float>(fwd.outputs[t], std::get<int>(*s.targets[t]));
                    loss_sum += lg.loss;
                    upstream[t] = std::move(lg.grad);
                } else {
                    const auto target = static_cast<float>((std::get<double>(*s.targets[t]) - ck.target_mean[t]) / ck.target_scale[t]);
                    auto lg = loss_mse<float>(fwd.outputs[t][0], target);
                    loss_sum += lg.loss;
                    upstream[t] = std::move(lg.grad);
                }
            }
            const auto grads = backward(view, params, fwd, upstream);
            adam_step(params, grads, adam);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(train.size());
        if (config.log_timestamps) entry.timestamp = utc_timestamp();
        Checkpoint current = ck;
        current.params = params;
        if (!val.empty()) entry.val_metric = selection_score(evaluate_samples(current, val));
        result.log.push_back(entry);

        if (entry.val_metric) {
            if (!best || *entry.val_metric > *best) {
                best = entry.val_metric;
                result.best_epoch = epoch;
                result.checkpoint = current;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                break;
            }
        } else {
            // No validation signal: keep the latest parameters.
            result.best_epoch = epoch;
            result.checkpoint = current;
        }
    }
    return result;
}

std::string epoch_log_jsonl(const std::vector<EpochLog>& log) {
    std::string out;
    for (const auto& e : log) {
        nlohmann::ordered_json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        j["val_metric"] = e.val_metric ? nlohmann::ordered_json(*e.val_metric) : nlohmann::ordered_json(nullptr);
        if (!e.timestamp.empty()) j["timestamp"] = e.timestamp;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<Sample> load_samples(const Dataset& ds, const std::vector<TaskConfig>& tasks, Subset subset) {
    if (!ds.splits) fail(ErrorCode::MissingTaskSettings, "dataset has no splits.csv; run split first");
    std::vector<Sample> out;
    for (const auto& [slide_id, s] : *ds.splits) {
        if (s != subset) continue;
        Sample sample;
        sample.slide_id = slide_id;
        bool any = false;
        for (const auto& t : tasks) {
            sample.targets.push_back(ds.label(t, slide_id));
            any = any || sample.targets.back().has_value();
        }
        if (!any) continue;
        const SlideEntry* entry = ds.slide(slide_id);
        if (!entry || !entry->has_features) {
            fail(ErrorCode::MissingFeatures, "slide '" + slide_id + "' (" + to_string(subset) + ") has no feature file");
        }
        sample.bag = std::make_shared<FeatureBag>(read_features(entry->features_path()));
        out.push_back(std::move(sample));
    }
    return out;
}

TrainResult train_model(const Dataset& ds, const std::vector<std::string>& task_names, const TrainConfig& config,
                        const std::filesystem::path& out_dir) {
    std::vector<TaskConfig> tasks;
    if (task_names.empty()) tasks = ds.tasks;
    for (const auto& n : task_names) tasks.push_back(ds.task(n));
    const auto train = load_samples(ds, tasks, Subset::Train);
    const auto val = load_samples(ds, tasks, Subset::Val);
    if (train.empty()) fail(ErrorCode::NoLabeledSlides, "no labeled training slides with features");
    auto result = train_bags(tasks, train, val, config, train.front().bag->embedder_id);
    std::filesystem::create_directories(out_dir);
    write_checkpoint(out_dir / "checkpoint.bin", result.checkpoint);
    write_text_file(out_dir / "train_log.jsonl", epoch_log_jsonl(result.log));
    return result;
}

MetricsReport evaluate(const Dataset& ds, const Checkpoint& ckpt, Subset subset, CorrelationKind correlation) {
    for (const auto& t : ckpt.tasks) {
        const auto& dt = ds.task(t.name);
        if (dt.kind != t.kind || dt.classes != t.classes) {
            fail(ErrorCode::MalformedConfig, "checkpoint task '" + t.name + "' does not match the dataset's definition");
        }
    }
    const auto samples = load_samples(ds, ckpt.tasks, subset);
    for (const auto& s : samples) {
        if (s.bag->dim != ckpt.params.dim) fail(ErrorCode::ShapeMismatch, "slide " + s.slide_id + " feature dimension differs from the model");
    }
    return evaluate_samples(ckpt, samples, correlation);
}

}  // namespace slidebench
