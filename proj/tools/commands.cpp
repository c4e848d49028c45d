#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "demoe/checkpoint.hpp"
#include "demoe/dataset.hpp"
#include "demoe/image_io.hpp"
#include "demoe/macs.hpp"
#include "demoe/metrics.hpp"
#include "demoe/model.hpp"
#include "demoe/similarity.hpp"
#include "demoe/training.hpp"

namespace demoe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

std::string record_id(std::size_t i, const synth::ManifestRecord& r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu_", i);
  return buf + fs::path(r.degraded).stem().string();
}

net::ArchConfig arch_preset(const std::string& name) {
  if (name == "toy") return net::ArchConfig::toy();
  if (name == "full") return net::ArchConfig::full();
  throw UsageError("--arch must be toy or full, got '" + name + "'");
}

std::optional<std::size_t> expert_override(int expert) {
  if (expert < 0) return std::nullopt;
  return static_cast<std::size_t>(expert);
}

json weights_json(const net::Inference& inf, std::size_t n) {
  json j = {{"weights", json::array()}, {"selected", inf.selections[n].indices},
            {"mode", inf.selections[n].mode == net::ExpertSelection::Mode::manual ? "manual" : "automatic"}};
  if (n < inf.weights.size()) j["weights"] = inf.weights[n].w;
  return j;
}

int argmax(const std::vector<float>& w) {
  if (w.empty()) return -1;
  return static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
}

metrics::ReportFormat format_of(const std::string& s) {
  if (s == "json") return metrics::ReportFormat::json;
  if (s == "csv") return metrics::ReportFormat::csv;
  if (s == "table") return metrics::ReportFormat::table;
  throw UsageError("--format must be json, csv or table, got '" + s + "'");
}

void write_reports(OutputDir& out, const std::string& stem, const metrics::MetricRecord& r) {
  write_text(out.file(stem + ".json"), metrics::emit_report(r, metrics::ReportFormat::json));
  write_text(out.file(stem + ".csv"), metrics::emit_report(r, metrics::ReportFormat::csv));
  write_text(out.file(stem + ".txt"), metrics::emit_report(r, metrics::ReportFormat::table));
}

class Synth : public Command {
 public:
  std::string name() const override { return "synth"; }
  std::string description() const override { return "Generate the synthetic five-family blur dataset"; }
  void setup(Options& o) override {
    o.add("classes", classes_, "Number of degradation classes (the generator defines 5)");
    o.add("per-class", cfg_.n_per_class, "Images per class")->check(CLI::PositiveNumber);
    o.add("size", cfg_.size, "Square image size in pixels")->check(CLI::PositiveNumber);
    o.add("levels", cfg_.num_levels, "Encoder levels the size must be divisible for");
    o.add("seed", cfg_.seed, "Generator seed");
  }
  void check() const override {
    if (classes_ != 5) throw UsageError("--classes must be 5, got " + std::to_string(classes_));
  }
  int execute(OutputDir& out) override {
    const synth::DatasetManifest m = synth::generate_toy_dataset(cfg_, out.staging());
    std::cout << "generated " << m.records.size() << " pairs in " << out.dir().string() << "\n";
    return 0;
  }

 private:
  std::size_t classes_ = 5;
  synth::ToyDatasetConfig cfg_;
};

class Curate : public Command {
 public:
  std::string name() const override { return "curate"; }
  std::string description() const override { return "MSE-histogram subsampling and class balancing of a manifest"; }
  void setup(Options& o) override {
    o.add("manifest", manifest_, "Input manifest.json")->check(CLI::ExistingFile);
    o.add("paired-root", paired_root_, "Index a <family>/{blur,sharp}/*.png tree instead of --manifest")
        ->check(CLI::ExistingDirectory);
    o.add("bins", bins_, "Histogram bins (0 skips subsampling)");
    o.add("per-bin", per_bin_, "Records drawn per bin");
    o.flag("drop-tail", drop_tail_, "Drop the top bin when it holds under 5% of records");
    o.add("balance", balance_, "Comma-separated per-class targets, empty to skip");
    o.add("seed", seed_, "Curation seed");
  }
  void check() const override {
    if (manifest_.empty() == paired_root_.empty()) throw UsageError("give exactly one of --manifest or --paired-root");
    if (bins_ == 1) throw UsageError("--bins must be 0 or at least 2");
    targets();
  }
  int execute(OutputDir& out) override {
    synth::DatasetManifest m =
        manifest_.empty() ? synth::index_paired_dataset(paired_root_) : synth::load_manifest(manifest_);
    const std::size_t before = m.records.size();
    if (bins_ > 0) m = synth::mse_histogram_subsample(m, bins_, per_bin_, drop_tail_, seed_);
    const auto t = targets();
    if (!t.empty()) m = synth::balance_dataset(m, t, seed_);
    const fs::path final_dir = fs::absolute(out.dir());
    for (auto& r : m.records) {
      r.degraded = fs::relative(fs::absolute(m.root / r.degraded), final_dir).generic_string();
      r.clean = fs::relative(fs::absolute(m.root / r.clean), final_dir).generic_string();
    }
    write_text(out.file("manifest.json"), synth::serialize_manifest(m));
    std::cout << "curated " << before << " -> " << m.records.size() << " records\n";
    return 0;
  }

 private:
  std::vector<std::size_t> targets() const {
    std::vector<std::size_t> t;
    std::stringstream ss(balance_);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      try {
        std::size_t used = 0;
        const long long v = std::stoll(item, &used);
        if (used != item.size() || v <= 0) throw std::invalid_argument(item);
        t.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw UsageError("--balance expects positive integers, got '" + item + "'");
      }
    }
    return t;
  }

  std::string manifest_;
  std::string paired_root_;
  std::size_t bins_ = 4;
  std::size_t per_bin_ = 1400;
  bool drop_tail_ = true;
  std::string balance_;
  std::uint64_t seed_ = 0;
};

class Train : public Command {
 public:
  std::string name() const override { return "train"; }
  std::string description() const override { return "Two-stage training on a dataset manifest"; }
  void setup(Options& o) override {
    o.add("train", manifest_, "Training manifest.json")->required()->check(CLI::ExistingFile);
    o.add("stage", stage_, "1, 2 or both");
    o.add("init", init_, "Stage-1 checkpoint to finetune when --stage 2");
    o.add("arch", arch_, "Architecture preset: toy or full");
    o.add("fusion", fusion_, "weighted_sum, addition_residual or attention_connection");
    o.add("epochs", cfg_.epochs, "Epochs per stage");
    o.add("batch", cfg_.batch, "Batch size");
    o.add("patch", cfg_.patch, "Random crop size");
    o.add("lr0", cfg_.lr0, "Initial learning rate");
    o.add("lr-min", cfg_.lr_min, "Final learning rate of the cosine schedule");
    o.add("weight-decay", cfg_.adam.weight_decay, "AdamW decoupled weight decay");
    o.add("lambda-pixel", cfg_.loss.lambda_pixel, "Pixel loss weight");
    o.add("lambda-class", cfg_.loss.lambda_class, "Router classification loss weight");
    o.add("clip-norm", cfg_.clip_norm, "Global gradient norm clip, 0 disables");
    o.add("router-noise", cfg_.router_noise, "Std of Gaussian noise on router logits, 0 disables");
    o.flag("hflip", cfg_.augment.hflip, "Random horizontal flips");
    o.flag("vflip", cfg_.augment.vflip, "Random vertical flips");
    o.add("seed", cfg_.seed, "Initialization and sampling seed");
  }
  void check() const override {
    if (stage_ != "1" && stage_ != "2" && stage_ != "both") {
      throw UsageError("--stage must be 1, 2 or both, got '" + stage_ + "'");
    }
    if (stage_ == "2" && init_.empty()) throw UsageError("--stage 2 needs --init");
    arch_preset(arch_);
  }
  int execute(OutputDir& out) override {
    train::TrainConfig cfg = cfg_;
    cfg.arch = arch_preset(arch_);
    cfg.arch.fusion = net::fusion_mode_from_string(fusion_);
    std::string curve = "stage,epoch,loss,pixel,classification,lr\n";
    cfg.on_epoch = [&](const train::EpochStats& s) {
      char line[200];
      std::snprintf(line, sizeof line, "stage %d epoch %zu/%zu loss %.6f pixel %.6f class %.6f lr %.3g (%.1fs)", s.stage,
                    s.epoch + 1, cfg.epochs, s.loss, s.pixel, s.classification, static_cast<double>(s.lr), s.seconds);
      std::cout << line << std::endl;
      std::snprintf(line, sizeof line, "%d,%zu,%.17g,%.17g,%.17g,%.9g\n", s.stage, s.epoch, s.loss, s.pixel,
                    s.classification, static_cast<double>(s.lr));
      curve += line;
    };
    cfg.validate();
    const std::vector<synth::Sample> data = synth::load_samples(synth::load_manifest(manifest_));

    std::optional<net::Checkpoint> s1;
    if (stage_ != "2") {
      s1 = train::stage1_train(data, cfg).checkpoint;
      net::save_checkpoint(*s1, out.file("stage1.dmoe"));
    } else {
      s1 = net::load_checkpoint(init_);
    }
    if (stage_ != "1") {
      const net::Checkpoint s2 = train::stage2_finetune(*s1, data, cfg).checkpoint;
      net::save_checkpoint(s2, out.file("stage2.dmoe"));
    }
    write_text(out.file("curve.csv"), curve);
    return 0;
  }

 private:
  std::string manifest_;
  std::string stage_ = "both";
  std::string init_;
  std::string arch_ = "toy";
  std::string fusion_ = "weighted_sum";
  train::TrainConfig cfg_ = train::TrainConfig::toy();
};

class Infer : public Command {
 public:
  std::string name() const override { return "infer"; }
  std::string description() const override { return "Restore one image or every image of a manifest"; }
  void setup(Options& o) override {
    o.add("ckpt", ckpt_, "Checkpoint")->required()->check(CLI::ExistingFile);
    o.add("k", k_, "Active experts per MoE block")->check(CLI::PositiveNumber);
    o.add("expert", expert_, "Force this expert, -1 routes automatically");
    o.add("in", in_, "Input PNG (single-image mode)");
    o.add("out", out_, "Output PNG (single-image mode)");
    o.add("manifest", manifest_, "Manifest of degraded/clean pairs (batch mode)");
  }
  void check() const override {
    if (in_.empty() == manifest_.empty()) throw UsageError("give exactly one of --in or --manifest");
    if (!in_.empty() && out_.empty()) throw UsageError("--in needs --out");
    if (!manifest_.empty() && !out_.empty()) throw UsageError("--out is only used with --in");
  }
  int execute(OutputDir& out) override {
    const net::Checkpoint ck = net::load_checkpoint(ckpt_);
    return in_.empty() ? batch(ck, out) : single(ck, out);
  }

 private:
  int single(const net::Checkpoint& ck, OutputDir& out) {
    const Tensor image = io::read_png(in_);
    const net::Inference inf = net::demoe_infer(ck, image, k_, expert_override(expert_));
    io::write_png(out.external(out_), inf.restored);
    json w = weights_json(inf, 0);
    w["image"] = in_;
    write_text(out.file("router_weights.json"), json::array({w}).dump(2) + "\n");
    std::cout << "wrote " << out_ << " (experts";
    for (std::size_t e : inf.selections[0].indices) std::cout << ' ' << e;
    std::cout << ")\n";
    return 0;
  }

  int batch(const net::Checkpoint& ck, OutputDir& out) {
    const synth::DatasetManifest m = synth::load_manifest(manifest_);
    metrics::MetricRecord rec;
    rec.dataset = manifest_;
    json weights = json::array();
    json errors = json::array();
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      const std::string id = record_id(i, m.records[i]);
      try {
        const Tensor degraded = io::read_png(m.degraded_path(i));
        const Tensor clean = io::read_png(m.clean_path(i));
        const net::Inference inf = net::demoe_infer(ck, degraded, k_, expert_override(expert_));
        io::write_png(out.file("restored/" + id + ".png"), inf.restored);
        json w = weights_json(inf, 0);
        w["id"] = id;
        weights.push_back(w);
        rec.images.push_back({id, metrics::psnr(inf.restored, clean), metrics::ssim(inf.restored, clean),
                              m.records[i].label, inf.weights.empty() ? -1 : argmax(inf.weights[0].w)});
      } catch (const IoError& e) {
        std::cerr << "record " << i << ": " << e.what() << "\n";
        errors.push_back({{"record", i}, {"id", id}, {"error", e.what()}});
      }
    }
    metrics::aggregate(rec);
    write_text(out.file("router_weights.json"), weights.dump(2) + "\n");
    write_reports(out, "metrics", rec);
    if (!errors.empty()) write_text(out.file("errors.json"), errors.dump(2) + "\n");
    std::cout << metrics::emit_report(rec, metrics::ReportFormat::table);
    return errors.empty() ? 0 : 2;
  }

  std::string ckpt_;
  std::size_t k_ = 1;
  int expert_ = -1;
  std::string in_;
  std::string out_;
  std::string manifest_;
};

class Analyze : public Command {
 public:
  std::string name() const override { return "analyze"; }
  std::string description() const override { return "Layer-wise Pearson and CKA similarity of two checkpoints"; }
  void setup(Options& o) override {
    o.add("a", a_, "First checkpoint")->required()->check(CLI::ExistingFile);
    o.add("b", b_, "Second checkpoint")->required()->check(CLI::ExistingFile);
    o.add("sigma", sigma_, "RBF bandwidth, 0 uses the median heuristic")->check(CLI::NonNegativeNumber);
    o.add("threshold", threshold_, "High-correlation threshold on R");
  }
  int execute(OutputDir& out) override {
    sim::SimilarityConfig cfg;
    cfg.threshold = threshold_;
    if (sigma_ > 0.0) cfg.bandwidth = sim::Bandwidth::fixed_sigma(sigma_);
    const sim::SimilarityReport r =
        sim::similarity_report(net::load_checkpoint(a_), net::load_checkpoint(b_), cfg);
    write_text(out.file("similarity.json"), sim::report_to_json(r).dump(2) + "\n");
    const std::string table = sim::report_table(r);
    write_text(out.file("similarity.txt"), table);
    std::cout << table;
    return 0;
  }

 private:
  std::string a_;
  std::string b_;
  double sigma_ = 0.0;
  double threshold_ = 0.7;
};

class Eval : public Command {
 public:
  std::string name() const override { return "eval"; }
  std::string description() const override { return "PSNR, SSIM and router accuracy over a manifest"; }
  void setup(Options& o) override {
    o.add("ckpt", ckpt_, "Checkpoint")->required()->check(CLI::ExistingFile);
    o.add("manifest", manifest_, "Manifest of degraded/clean pairs")->required()->check(CLI::ExistingFile);
    o.add("k", k_, "Active experts per MoE block")->check(CLI::PositiveNumber);
    o.add("expert", expert_, "Force this expert, -1 routes automatically");
    o.add("batch", batch_, "Inference batch size")->check(CLI::PositiveNumber);
    o.add("format", format_, "Report printed to stdout: json, csv or table");
  }
  void check() const override { format_of(format_); }
  int execute(OutputDir& out) override {
    const synth::DatasetManifest m = synth::load_manifest(manifest_);
    const train::Evaluation e =
        train::evaluate(net::load_checkpoint(ckpt_), synth::load_samples(m), k_, expert_, batch_);
    metrics::MetricRecord rec;
    rec.dataset = manifest_;
    for (std::size_t i = 0; i < e.psnr.size(); ++i) {
      rec.images.push_back({record_id(i, m.records[i]), e.psnr[i], e.ssim[i], e.labels[i], e.predicted[i]});
    }
    metrics::aggregate(rec);
    write_reports(out, "report", rec);
    const json summary = {{"images", e.psnr.size()},
                          {"mean_psnr", e.mean_psnr},
                          {"mean_degraded_psnr", e.mean_degraded_psnr},
                          {"mean_ssim", e.mean_ssim},
                          {"router_accuracy", e.router_accuracy >= 0.0 ? json(e.router_accuracy) : json(nullptr)}};
    write_text(out.file("summary.json"), summary.dump(2) + "\n");
    std::cout << metrics::emit_report(rec, format_of(format_));
    char line[160];
    std::snprintf(line, sizeof line, "degraded input PSNR %.4f dB, restored %.4f dB\n", e.mean_degraded_psnr,
                  e.mean_psnr);
    std::cout << line;
    return 0;
  }

 private:
  std::string ckpt_;
  std::string manifest_;
  std::size_t k_ = 1;
  int expert_ = -1;
  std::size_t batch_ = 16;
  std::string format_ = "table";
};

class Macs : public Command {
 public:
  std::string name() const override { return "macs"; }
  std::string description() const override { return "Analytic parameter and MAC counts"; }
  void setup(Options& o) override {
    o.add("arch", arch_, "Architecture preset: toy or full");
    o.add("ckpt", ckpt_, "Take the architecture and parameters from a checkpoint instead");
    o.add("height", height_, "Input height")->check(CLI::PositiveNumber);
    o.add("width", width_, "Input width")->check(CLI::PositiveNumber);
    o.add("k", k_, "Active experts per MoE block")->check(CLI::PositiveNumber);
  }
  void check() const override {
    if (ckpt_.empty()) arch_preset(arch_);
  }
  int execute(OutputDir& out) override {
    const Shape in{1, 3, height_, width_};
    net::ComputeCount c;
    net::ArchConfig cfg;
    if (ckpt_.empty()) {
      cfg = arch_preset(arch_);
      c = net::count_params_macs(cfg, in, k_);
    } else {
      const net::Checkpoint ck = net::load_checkpoint(ckpt_);
      cfg = ck.config();
      c = net::count_params_macs(ck, in, k_);
    }
    net::ArchConfig base = cfg;
    base.router = false;
    base.expert_slots = 1;
    const net::ComputeCount b = net::count_params_macs(base, in, 1);
    const json j = {{"input", {height_, width_}},
                    {"k", k_},
                    {"params", c.params},
                    {"active_params", c.active_params},
                    {"macs", c.macs},
                    {"breakdown",
                     {{"encoder", c.breakdown.encoder},
                      {"router", c.breakdown.router},
                      {"middle", c.breakdown.middle},
                      {"decoder", c.breakdown.decoder},
                      {"ending", c.breakdown.ending}}},
                    {"baseline", {{"params", b.params}, {"macs", b.macs}}}};
    write_text(out.file("macs.json"), j.dump(2) + "\n");
    std::printf("params %llu (active %llu), MACs %.4f G at %zux%zu, k=%zu\n",
                static_cast<unsigned long long>(c.params), static_cast<unsigned long long>(c.active_params),
                static_cast<double>(c.macs) / 1e9, height_, width_, k_);
    std::printf("router MACs %llu; single-decoder baseline MACs %llu\n",
                static_cast<unsigned long long>(c.breakdown.router), static_cast<unsigned long long>(b.macs));
    return 0;
  }

 private:
  std::string arch_ = "full";
  std::string ckpt_;
  std::size_t height_ = 256;
  std::size_t width_ = 256;
  std::size_t k_ = 1;
};

}  // namespace

std::vector<std::unique_ptr<Command>> make_commands() {
  std::vector<std::unique_ptr<Command>> out;
  out.push_back(std::make_unique<Synth>());
  out.push_back(std::make_unique<Curate>());
  out.push_back(std::make_unique<Train>());
  out.push_back(std::make_unique<Infer>());
  out.push_back(std::make_unique<Analyze>());
  out.push_back(std::make_unique<Eval>());
  out.push_back(std::make_unique<Macs>());
  return out;
}

}  // namespace demoe::cli
