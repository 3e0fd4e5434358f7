#include "stylevec/cli.hpp"

#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "stylevec/analysis.hpp"
#include "stylevec/error.hpp"
#include "stylevec/fixtures.hpp"
#include "stylevec/lora.hpp"
#include "stylevec/merge.hpp"
#include "stylevec/parallel.hpp"
#include "stylevec/report_json.hpp"
#include "stylevec/taskvector.hpp"

namespace stylevec::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
    bool quiet = false;
    bool json_out = false;
    unsigned threads = 1;
};

struct TopologyFlags {
    int n_blocks = -1;
    std::string block_pattern = "transformer_blocks.{i}.";
    std::vector<std::string> embedding_patterns;
    int split_index = -1;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--n-blocks", n_blocks, "Number of DiT blocks (default: inferred from the base)");
        cmd->add_option("--block-pattern", block_pattern, "Block key pattern with one {i}")->capture_default_str();
        cmd->add_option("--embedding-pattern", embedding_patterns, "Text-embedding key prefix (repeatable)");
        cmd->add_option("--split-index", split_index, "First late block (default: n_blocks / 2)");
    }

    ModelTopology resolve(const Checkpoint* base) const {
        ModelTopology t;
        t.block_pattern = block_pattern;
        if (!embedding_patterns.empty()) t.embedding_patterns = embedding_patterns;
        if (n_blocks >= 0) {
            t.n_blocks = n_blocks;
        } else if (base) {
            ModelTopology probe = t;
            long long highest = -1;
            for (const auto& [k, _] : base->entries) {
                if (auto i = probe.block_index(k)) highest = std::max(highest, *i);
            }
            t.n_blocks = static_cast<int>(highest + 1);
        }
        if (split_index >= 0) t.split_index = split_index;
        t.validate();
        return t;
    }
};

std::string id_of(const fs::path& p) { return p.filename().string(); }

double coefficient_from_flags(const std::optional<double>& alpha, const std::optional<double>& beta) {
    return alpha ? *alpha : *beta;
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

std::string fmt_cos(const json& c) { return c.is_null() ? std::string("undef") : fmt(c.get<double>()); }

// Human-readable rendering of each command's JSON document.
void render_text(const std::string& command, const json& doc, std::ostream& out) {
    if (command == "inspect") {
        const auto& h = doc.at("header");
        out << "tensors: " << h.at("tensor_count") << "  parameters: " << h.at("parameter_count")
            << "  header bytes: " << h.at("header_size") << "\n";
        for (const auto& t : h.at("tensors")) {
            out << "  " << std::left << std::setw(48) << t.at("key").get<std::string>() << " "
                << std::setw(5) << t.at("dtype").get<std::string>() << " " << t.at("shape").dump() << "\n";
        }
        for (const auto& [k, v] : h.at("metadata").items()) out << "  meta " << k << " = " << v.get<std::string>() << "\n";
        out << "violations: " << h.at("violations").size() << "\n";
        for (const auto& v : h.at("violations")) {
            out << "  " << v.at("kind").get<std::string>() << " " << v.at("keys").dump() << " "
                << v.at("detail").get<std::string>() << "\n";
        }
        if (doc.contains("layer_stats")) {
            out << "per-layer variation:\n";
            for (const auto& l : doc.at("layer_stats").at("layers")) {
                out << "  " << std::left << std::setw(48) << l.at("key").get<std::string>() << " abs "
                    << std::setw(12) << fmt(l.at("abs_norm").get<double>()) << " rel "
                    << fmt(l.at("rel_norm").get<double>()) << "\n";
            }
            if (doc.at("layer_stats").contains("groups")) {
                for (const auto& [g, s] : doc.at("layer_stats").at("groups").items()) {
                    out << "  group " << std::setw(15) << g << " keys " << s.at("keys") << " numel " << s.at("numel")
                        << " norm " << fmt(s.at("abs_norm").get<double>()) << "\n";
                }
            }
        }
        return;
    }
    if (command == "cosine") {
        const auto& labels = doc.at("labels");
        out << std::setw(24) << "";
        for (const auto& l : labels) out << std::setw(14) << l.get<std::string>().substr(0, 13);
        out << "\n";
        for (std::size_t i = 0; i < labels.size(); ++i) {
            out << std::left << std::setw(24) << labels[i].get<std::string>().substr(0, 23) << std::right;
            for (const auto& c : doc.at("cosine")[i]) out << std::setw(14) << fmt_cos(c);
            out << std::left << "\n";
        }
        return;
    }
    if (command == "linearity") {
        out << "step  cosine        residual      norm\n";
        for (const auto& s : doc.at("steps")) {
            out << std::left << std::setw(6) << s.at("index").get<std::size_t>() << std::setw(14)
                << fmt_cos(s.at("cosine")) << std::setw(14) << fmt(s.at("residual").get<double>())
                << fmt(s.at("norm").get<double>()) << "\n";
        }
        return;
    }
    if (command == "merge" && doc.contains("plan")) {
        const auto& plan = doc.at("plan");
        out << "strategy: " << plan.at("strategy").get<std::string>() << "\n";
        for (const auto& in : plan.at("inputs")) {
            out << "  input " << in.at("index") << " " << in.at("source").get<std::string>() << " ("
                << in.at("kind").get<std::string>() << ", " << in.at("role").get<std::string>() << ") coefficient "
                << fmt(in.at("coefficient").get<double>()) << " -> scale " << fmt(in.at("effective_scale").get<double>())
                << "\n";
        }
        out << "keys receiving contributions: " << plan.at("contributions").size() << "\n";
        for (const auto& [k, cs] : plan.at("contributions").items()) {
            out << "  " << k;
            for (const auto& c : cs) out << "  #" << c.at("input") << " scale " << fmt(c.at("scale").get<double>());
            out << "\n";
        }
        if (plan.contains("class_counts")) out << "class counts: " << plan.at("class_counts").dump() << "\n";
        out << "dropped (out-of-region) keys: " << plan.at("dropped").size() << "\n";
        if (doc.value("dry_run", false)) out << "dry run: nothing written\n";
        if (doc.contains("output")) out << "output: " << doc.at("output").get<std::string>() << "\n";
        return;
    }
    if (command == "lora-extract" && doc.contains("ranking")) {
        out << "relative variation:\n";
        for (const auto& e : doc.at("ranking")) {
            out << "  " << std::left << std::setw(48) << e.at("key").get<std::string>() << " "
                << fmt(e.at("relative_change").get<double>()) << "\n";
        }
    }
    // generic: one line per top-level field
    for (const auto& [k, v] : doc.items()) {
        if (k == "schema_version" || k == "command" || k == "ranking") continue;
        out << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    }
}

void write_output(const Checkpoint& ckpt, const fs::path& path, bool dry_run) {
    if (!dry_run) write_checkpoint(ckpt, path);
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"stylevec: task-vector, E-Vector and LoRA algebra on safetensors checkpoints", "stylevec"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_flag("--quiet,-q", g.quiet, "Suppress normal output");
    app.add_flag("--json", g.json_out, "Print one machine-readable JSON document to stdout");
    app.add_option("--threads", g.threads, "Worker threads for per-tensor work")
        ->envname("STYLEVEC_THREADS")
        ->check(CLI::Range(1u, 1024u));

    // Each command returns its JSON document; writes happen inside.
    std::function<json()> action;
    std::string command;
    auto sub = [&](const std::string& name, const std::string& help) {
        auto* cmd = app.add_subcommand(name, help);
        cmd->callback([&command, name] { command = name; });
        return cmd;
    };

    // diff -----------------------------------------------------------------
    fs::path diff_ft, diff_base, diff_out;
    std::string diff_policy = "strict";
    bool diff_dry = false;
    {
        auto* cmd = sub("diff", "Build a task vector: fine-tuned minus base");
        cmd->add_option("--finetuned", diff_ft, "Fine-tuned checkpoint")->required();
        cmd->add_option("--base", diff_base, "Pre-trained checkpoint")->required();
        cmd->add_option("--out", diff_out, "Task-vector output file")->required();
        cmd->add_option("--policy", diff_policy, "Key alignment")
            ->check(CLI::IsMember({"strict", "intersect"}))
            ->capture_default_str();
        cmd->add_flag("--dry-run", diff_dry, "Compute and report without writing");
    }

    // apply / scale ----------------------------------------------------------
    fs::path apply_base, apply_vector, apply_out;
    std::optional<double> apply_alpha, apply_beta;
    double apply_beta_max = 3.0;
    bool apply_dry = false;
    {
        auto* cmd = sub("apply", "Apply a (scaled) task vector to a base checkpoint");
        cmd->add_option("--base", apply_base, "Pre-trained checkpoint")->required();
        cmd->add_option("--vector", apply_vector, "Task-vector or E-Vector file")->required();
        auto* a = cmd->add_option("--alpha", apply_alpha, "Enhancement coefficient");
        auto* b = cmd->add_option("--beta", apply_beta, "Emotion strength, checked against --beta-max");
        a->excludes(b);
        cmd->add_option("--beta-max", apply_beta_max, "Upper bound for --beta")->capture_default_str();
        cmd->add_option("--out", apply_out, "Output checkpoint")->required();
        cmd->add_flag("--dry-run", apply_dry, "Compute and report without writing");
    }
    fs::path scale_vector, scale_out;
    std::optional<double> scale_alpha, scale_beta;
    double scale_beta_max = 3.0;
    bool scale_dry = false;
    {
        auto* cmd = sub("scale", "Attach a coefficient to a task vector (E-Vector file)");
        cmd->add_option("--vector", scale_vector, "Task-vector file")->required();
        auto* a = cmd->add_option("--alpha", scale_alpha, "Enhancement coefficient");
        auto* b = cmd->add_option("--beta", scale_beta, "Emotion strength, checked against --beta-max");
        a->excludes(b);
        cmd->add_option("--beta-max", scale_beta_max, "Upper bound for --beta")->capture_default_str();
        cmd->add_option("--out", scale_out, "E-Vector output file")->required();
        cmd->add_flag("--dry-run", scale_dry, "Validate without writing");
    }

    // merge ------------------------------------------------------------------
    fs::path merge_recipe;
    bool merge_dry = false;
    {
        auto* cmd = sub("merge", "Run a full or hierarchical merge recipe");
        cmd->add_option("--recipe", merge_recipe, "Recipe JSON file")->required();
        cmd->add_flag("--dry-run", merge_dry, "Print the compiled plan without writing");
    }

    // lora-extract / lora-apply ----------------------------------------------
    fs::path lx_vector, lx_base, lx_out;
    std::size_t lx_rank = 8;
    std::vector<std::string> lx_targets;
    std::size_t lx_top = 0;
    bool lx_dry = false;
    {
        auto* cmd = sub("lora-extract", "Truncated-SVD LoRA adapter from a task vector");
        cmd->add_option("--vector", lx_vector, "Task-vector file")->required();
        cmd->add_option("--rank", lx_rank, "Adapter rank")->capture_default_str()->check(CLI::PositiveNumber);
        auto* t = cmd->add_option("--targets", lx_targets, "Target keys (comma separated or repeated)")->delimiter(',');
        auto* top = cmd->add_option("--top", lx_top, "Use the N keys with the largest relative variation");
        t->excludes(top);
        cmd->add_option("--base", lx_base, "Base checkpoint (needed by --top)");
        cmd->add_option("--out", lx_out, "Adapter output file")->required();
        cmd->add_flag("--dry-run", lx_dry, "Compute and report without writing");
    }
    fs::path la_base, la_adapter, la_out;
    double la_alpha = 1.0;
    bool la_dry = false;
    {
        auto* cmd = sub("lora-apply", "Apply a LoRA adapter at scale alpha^2");
        cmd->add_option("--base", la_base, "Pre-trained checkpoint")->required();
        cmd->add_option("--adapter", la_adapter, "Adapter file")->required();
        cmd->add_option("--alpha", la_alpha, "Enhancement coefficient (applied squared)")->capture_default_str();
        cmd->add_option("--out", la_out, "Output checkpoint")->required();
        cmd->add_flag("--dry-run", la_dry, "Compute and report without writing");
    }

    // inspect ----------------------------------------------------------------
    fs::path in_file, in_base;
    TopologyFlags in_topo;
    {
        auto* cmd = sub("inspect", "Header report, plus per-layer variation given --base");
        cmd->add_option("--file", in_file, "Checkpoint, task-vector or adapter file")->required();
        cmd->add_option("--base", in_base, "Base checkpoint for per-layer statistics of a task vector");
        in_topo.add_to(cmd);
    }

    // cosine -----------------------------------------------------------------
    std::vector<fs::path> cos_vectors;
    bool cos_per_layer = false;
    {
        auto* cmd = sub("cosine", "Pairwise cosine similarity of task vectors");
        cmd->add_option("--vectors,vectors", cos_vectors, "Task-vector files")->required()->expected(2, 1 << 20);
        cmd->add_flag("--per-layer", cos_per_layer, "Also report per-key cosines");
    }

    // perturb ----------------------------------------------------------------
    fs::path pt_in, pt_out;
    double pt_sigma = 1e-3;
    std::uint64_t pt_seed = 0;
    std::vector<std::string> pt_keys;
    std::string pt_class;
    TopologyFlags pt_topo;
    bool pt_dry = false;
    {
        auto* cmd = sub("perturb", "Add seeded Gaussian noise to selected tensors");
        cmd->add_option("--in", pt_in, "Input checkpoint")->required();
        cmd->add_option("--out", pt_out, "Output checkpoint")->required();
        cmd->add_option("--sigma", pt_sigma, "Noise standard deviation")->capture_default_str();
        cmd->add_option("--seed", pt_seed, "PRNG seed")->capture_default_str();
        cmd->add_option("--keys", pt_keys, "Target keys (comma separated or repeated)")->delimiter(',');
        cmd->add_option("--layer-class", pt_class, "Target every key of a class")
            ->check(CLI::IsMember({"embedding", "early", "late", "other", "text_embedding", "early_block",
                                   "late_block"}));
        pt_topo.add_to(cmd);
        cmd->add_flag("--dry-run", pt_dry, "Report targets without writing");
    }

    // linearity --------------------------------------------------------------
    fs::path lin_base;
    std::vector<fs::path> lin_traj;
    {
        auto* cmd = sub("linearity", "Deviation of a fine-tuning trajectory from a straight line");
        cmd->add_option("--base", lin_base, "Pre-trained checkpoint")->required();
        cmd->add_option("--trajectory", lin_traj, "Checkpoints in training order, final last")
            ->required()
            ->expected(3, 1 << 20);
    }

    // gen-fixture ------------------------------------------------------------
    FixtureSpec fx;
    std::string fx_dtype = "F32";
    fs::path fx_out, fx_variant_out, fx_ledger_out;
    std::vector<std::string> fx_classes, fx_keys;
    double fx_magnitude = 1.0;
    std::uint64_t fx_variant_seed = 1;
    std::string fx_style = "style";
    bool fx_dry = false;
    {
        auto* cmd = sub("gen-fixture", "Generate a toy DiT checkpoint and optionally a styled variant");
        cmd->add_option("--out", fx_out, "Base checkpoint output")->required();
        cmd->add_option("--n-blocks", fx.n_blocks, "Transformer blocks")->capture_default_str();
        cmd->add_option("--embed", fx.dims.embed, "Embedding width")->capture_default_str();
        cmd->add_option("--hidden", fx.dims.hidden, "Hidden width")->capture_default_str();
        cmd->add_option("--heads", fx.dims.heads, "Attention heads")->capture_default_str();
        cmd->add_option("--dtype", fx_dtype, "Storage dtype")
            ->check(CLI::IsMember({"F32", "F16", "BF16"}))
            ->capture_default_str();
        cmd->add_option("--seed", fx.seed, "Base seed")->capture_default_str();
        cmd->add_option("--variant-out", fx_variant_out, "Styled variant output");
        cmd->add_option("--target-class", fx_classes, "Plant on a layer class (repeatable)")
            ->check(CLI::IsMember({"embedding", "early", "late", "other", "text_embedding", "early_block",
                                   "late_block"}));
        cmd->add_option("--target-key", fx_keys, "Plant on a key (repeatable)");
        cmd->add_option("--magnitude", fx_magnitude, "Per-tensor Frobenius norm of planted deltas")
            ->capture_default_str();
        cmd->add_option("--variant-seed", fx_variant_seed, "Variant seed")->capture_default_str();
        cmd->add_option("--style", fx_style, "Style label")->capture_default_str();
        cmd->add_option("--ledger-out", fx_ledger_out, "Planted-delta ledger output");
        cmd->add_flag("--dry-run", fx_dry, "Report without writing");
    }

    std::vector<std::string> argv_storage{"stylevec"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_storage) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    set_thread_count(g.threads);

    auto require_coefficient = [](const std::optional<double>& alpha, const std::optional<double>& beta,
                                  std::optional<double> stored, double beta_max) -> EVector {
        if ((alpha || beta) && stored) {
            throw Error(ErrorCode::InvalidArgument,
                        "vector file already carries coefficient " + format_real(*stored) + "; drop --alpha/--beta");
        }
        if (!alpha && !beta && !stored) {
            throw Error(ErrorCode::InvalidArgument, "no coefficient: pass --alpha or --beta");
        }
        ScaleOptions opts;
        opts.emotion_mode = beta.has_value();
        opts.beta_max = beta_max;
        const double c = stored ? *stored : coefficient_from_flags(alpha, beta);
        return scale_task_vector(TaskVector{}, c, opts);
    };

    try {
        json doc;
        if (command == "diff") {
            const auto ft = read_checkpoint(diff_ft);
            const auto base = read_checkpoint(diff_base);
            const auto policy = diff_policy == "strict" ? KeyAlignment::Strict : KeyAlignment::Intersect;
            const auto tau = build_task_vector(ft, base, policy, id_of(diff_ft), id_of(diff_base));
            write_output(to_checkpoint(tau), diff_out, diff_dry);
            doc = {{"output", diff_out.string()},
                   {"keys", tau.delta.size()},
                   {"alignment", to_json(tau.alignment_report)},
                   {"dry_run", diff_dry}};
        } else if (command == "apply") {
            if (apply_beta_max < 0.0) throw Error(ErrorCode::InvalidArgument, "--beta-max must be non-negative");
            const auto base = read_checkpoint(apply_base);
            const auto vfile = read_checkpoint(apply_vector);
            auto eps = require_coefficient(apply_alpha, apply_beta, stored_coefficient(vfile), apply_beta_max);
            eps.vector = task_vector_from_checkpoint(vfile);
            if (eps.vector.provenance.finetuned_id.empty()) eps.vector.provenance.finetuned_id = id_of(apply_vector);
            const auto result = apply_evector(base, eps);
            write_output(result, apply_out, apply_dry);
            doc = {{"output", apply_out.string()},
                   {"coefficient", eps.coefficient},
                   {"keys_updated", eps.vector.delta.size()},
                   {"dry_run", apply_dry}};
        } else if (command == "scale") {
            if (!scale_alpha && !scale_beta) throw Error(ErrorCode::InvalidArgument, "pass --alpha or --beta");
            ScaleOptions opts;
            opts.emotion_mode = scale_beta.has_value();
            opts.beta_max = scale_beta_max;
            const double c = coefficient_from_flags(scale_alpha, scale_beta);
            scale_task_vector(TaskVector{}, c, opts); // range check before reading
            const auto vfile = read_checkpoint(scale_vector);
            if (stored_coefficient(vfile)) {
                throw Error(ErrorCode::InvalidArgument, "'" + scale_vector.string() + "' is already an E-Vector");
            }
            const auto eps = scale_task_vector(task_vector_from_checkpoint(vfile), c, opts);
            write_output(to_checkpoint(eps), scale_out, scale_dry);
            doc = {{"output", scale_out.string()}, {"coefficient", c}, {"dry_run", scale_dry}};
        } else if (command == "merge") {
            const auto recipe = load_recipe(merge_recipe);
            const auto plan = compile_recipe(recipe);
            doc = {{"plan", to_json(plan)}, {"dry_run", merge_dry}};
            if (!merge_dry) {
                write_checkpoint(execute_plan(plan), recipe.output);
                doc["output"] = recipe.output.string();
            }
        } else if (command == "lora-extract") {
            const auto tau = task_vector_from_checkpoint(read_checkpoint(lx_vector));
            std::vector<std::string> targets = lx_targets;
            json ranking;
            if (lx_top > 0) {
                if (lx_base.empty()) throw Error(ErrorCode::InvalidArgument, "--top needs --base");
                const auto base = read_checkpoint(lx_base);
                const auto ranked = rank_targets_by_variation(tau, base);
                ranking = to_json(ranked);
                for (const auto& e : ranked) {
                    if (targets.size() == lx_top) break;
                    const auto rank = tau.delta.at(e.key).shape().size();
                    if (rank == 2 || rank == 3) targets.push_back(e.key); // matrix-viewable weights only
                }
            }
            if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "no targets: pass --targets or --top");
            const auto adapter = extract_lora(tau, lx_rank, targets);
            write_output(to_checkpoint(adapter), lx_out, lx_dry);
            doc = {{"output", lx_out.string()}, {"rank", lx_rank}, {"targets", targets}, {"dry_run", lx_dry}};
            if (!ranking.is_null()) doc["ranking"] = ranking;
        } else if (command == "lora-apply") {
            const auto base = read_checkpoint(la_base);
            const auto adapter = lora_from_checkpoint(read_checkpoint(la_adapter));
            const auto result = apply_lora(base, adapter, la_alpha);
            write_output(result, la_out, la_dry);
            doc = {{"output", la_out.string()},
                   {"alpha", la_alpha},
                   {"effective_scale", la_alpha * la_alpha},
                   {"targets", adapter.entries.size()},
                   {"dry_run", la_dry}};
        } else if (command == "inspect") {
            doc = {{"file", in_file.string()}, {"header", to_json(validate_file(in_file))}};
            if (!in_base.empty()) {
                const auto base = read_checkpoint(in_base);
                const auto tau = task_vector_from_checkpoint(read_checkpoint(in_file));
                std::optional<ModelTopology> topo;
                const auto t = in_topo.resolve(&base);
                if (t.n_blocks > 0) topo = t;
                doc["layer_stats"] = to_json(per_layer_stats(tau, base, topo));
                doc["variation_ranking"] = to_json(rank_targets_by_variation(tau, base));
                if (topo) doc["topology"] = to_json(*topo);
            }
        } else if (command == "cosine") {
            std::vector<TaskVector> vectors;
            std::vector<std::string> labels;
            for (const auto& p : cos_vectors) {
                vectors.push_back(task_vector_from_checkpoint(read_checkpoint(p)));
                labels.push_back(id_of(p));
            }
            doc = to_json(direction_consistency(vectors, labels, cos_per_layer));
        } else if (command == "perturb") {
            const auto ckpt = read_checkpoint(pt_in);
            PerturbationSpec spec;
            spec.target_keys = pt_keys;
            spec.sigma = pt_sigma;
            spec.seed = pt_seed;
            if (!pt_class.empty()) {
                spec.layer_class = parse_layer_class(pt_class);
                spec.topology = pt_topo.resolve(&ckpt);
            }
            if (spec.target_keys.empty() && !spec.layer_class) {
                throw Error(ErrorCode::InvalidArgument, "no targets: pass --keys or --layer-class");
            }
            const auto targets = resolve_perturbation_targets(ckpt, spec);
            write_output(perturb(ckpt, spec), pt_out, pt_dry);
            doc = {{"output", pt_out.string()},
                   {"sigma", pt_sigma},
                   {"seed", pt_seed},
                   {"targets", targets},
                   {"dry_run", pt_dry}};
        } else if (command == "linearity") {
            const auto base = read_checkpoint(lin_base);
            std::vector<Checkpoint> traj;
            for (const auto& p : lin_traj) traj.push_back(read_checkpoint(p));
            doc = to_json(linearity_probe(base, traj));
        } else if (command == "gen-fixture") {
            fx.dtype = *parse_dtype(fx_dtype);
            const auto base = gen_base(fx);
            write_output(base, fx_out, fx_dry);
            doc = {{"output", fx_out.string()},
                   {"tensors", base.entries.size()},
                   {"parameters", base.parameter_count()},
                   {"dry_run", fx_dry}};
            if (!fx_variant_out.empty()) {
                PlantTargets targets;
                for (const auto& c : fx_classes) targets.classes.push_back(*parse_layer_class(c));
                targets.keys = fx_keys;
                if (targets.classes.empty() && targets.keys.empty()) {
                    throw Error(ErrorCode::InvalidArgument, "variant needs --target-class or --target-key");
                }
                auto [variant, ledger] = gen_styled_variant(base, targets, fx_magnitude, fx_variant_seed, fx_style);
                write_output(variant, fx_variant_out, fx_dry);
                json planted = json::array();
                for (const auto& [k, _] : ledger.deltas) planted.push_back(k);
                doc["variant"] = fx_variant_out.string();
                doc["planted_keys"] = std::move(planted);
                if (!fx_ledger_out.empty()) {
                    Checkpoint ledger_ckpt;
                    ledger_ckpt.entries = ledger.deltas;
                    ledger_ckpt.metadata = {{"stylevec.kind", "plant_ledger"},
                                            {"stylevec.fixture.style", ledger.style_label},
                                            {"stylevec.fixture.magnitude", format_real(ledger.magnitude)}};
                    write_output(ledger_ckpt, fx_ledger_out, fx_dry);
                    doc["ledger"] = fx_ledger_out.string();
                }
            } else if (!fx_classes.empty() || !fx_keys.empty() || !fx_ledger_out.empty()) {
                throw Error(ErrorCode::InvalidArgument, "plant targets and --ledger-out need --variant-out");
            }
        }

        if (g.json_out) {
            json envelope = {{"schema_version", kReportSchemaVersion}, {"command", command}};
            envelope.update(doc);
            out << envelope.dump(2) << "\n";
        } else if (!g.quiet) {
            render_text(command, doc, out);
        }
        return 0;
    } catch (const Error& e) {
        err << "stylevec " << command << ": " << e.what() << "\n";
        return exit_status(e.code());
    } catch (const std::exception& e) {
        err << "stylevec " << command << ": " << e.what() << "\n";
        return 2;
    }
}

} // namespace stylevec::cli
