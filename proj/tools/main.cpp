#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "mpcnn/data.hpp"
#include "mpcnn/report.hpp"
#include "mpcnn/supernet.hpp"

using nlohmann::json;
using namespace mpcnn;

namespace {

// dealer streams are salted off the session seed so the two never collide
constexpr u64 kDealerSalt = 0x9e3779b97f4a7c15ULL;

u64 fnv1a(const std::vector<u8>& bytes) {
  u64 h = 0xcbf29ce484222325ULL;
  for (u8 b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<u8> dataset_bytes(const Dataset& d) {
  std::vector<u8> out;
  out.reserve(d.images.size() + d.labels.size());
  for (float v : d.images)
    out.push_back(u8(std::clamp(std::lround(v * 255.0f), 0l, 255l)));
  out.insert(out.end(), d.labels.begin(), d.labels.end());
  return out;
}

std::pair<std::string, int> split_endpoint(const std::string& ep) {
  auto colon = ep.rfind(':');
  if (colon == std::string::npos || colon + 1 == ep.size())
    throw ConfigError("endpoint must look like host:port, got " + ep);
  int port = 0;
  try {
    port = std::stoi(ep.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("endpoint port is not a number: " + ep);
  }
  return {ep.substr(0, colon), port};
}

// --- synth ---------------------------------------------------------------

struct SynthArgs {
  std::size_t train = 10000, test = 2000, classes = 10;
  u64 seed = 2026;
  std::string out = "data";
};

void cmd_synth(const SynthArgs& a) {
  Corpus c = synth_corpus(a.train, a.test, resolve_seed(a.seed), a.classes);
  std::filesystem::create_directories(a.out);
  auto p = [&](const char* n) { return (std::filesystem::path(a.out) / n).string(); };
  write_idx(c.train, p("train-images.idx"), p("train-labels.idx"));
  write_idx(c.test, p("test-images.idx"), p("test-labels.idx"));
  std::printf("synth: %zu train + %zu test samples, %zu classes, 28x28 -> %s\n", c.train.count,
              c.test.count, a.classes, a.out.c_str());
}

// --- ingest --------------------------------------------------------------

struct IngestArgs {
  std::string images, labels, out;
  std::size_t subset = 0;
  std::size_t downsample = 0;  // target side length, 0 keeps the input
};

void cmd_ingest(const IngestArgs& a) {
  Dataset d = load_idx(a.images, a.labels);
  if (a.subset) subset(d, a.subset);
  if (a.downsample) {
    while (d.rows > a.downsample) {
      if (d.rows % 2 || d.rows / 2 < a.downsample)
        throw ConfigError("downsample target " + std::to_string(a.downsample) +
                          " is not reachable by halving from " + std::to_string(d.rows));
      downsample2(d);
    }
    if (d.rows != a.downsample)
      throw ConfigError("downsample target exceeds the input size");
  }
  for (u8 label : d.labels)
    if (label > 9) throw FormatError(a.labels + ": label out of range");
  u64 sum = fnv1a(dataset_bytes(d));
  std::printf("ingest: count=%zu rows=%zu cols=%zu checksum=%016llx\n", d.count, d.rows, d.cols,
              static_cast<unsigned long long>(sum));
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    auto p = [&](const char* n) { return (std::filesystem::path(a.out) / n).string(); };
    write_idx(d, p("images.idx"), p("labels.idx"));
  }
}

// --- dealer --------------------------------------------------------------

struct NasShape {
  std::size_t width = 16, layers = 2, classes = 2;
  std::size_t train_count = 256, val_count = 128, batch = 8;
  int epochs = 3, L = 4;

  SupernetConfig net() const {
    SupernetConfig n;
    n.width = width;
    n.layers = layers;
    n.classes = classes;
    return n;
  }
  TrainConfig train(u64 seed) const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch = batch;
    t.L = L;
    t.seed = seed;
    return t;
  }
};

struct DealerArgs {
  std::string out = "dealer";
  u64 seed = 1;
  int l = 64, f = 16;
  std::string bench;       // when set, size for a benchmark instead
  std::size_t bench_n = 100;
  NasShape nas;
};

DealerPlan plan_bench(const std::string& protocol, std::size_t n, int l) {
  DealerPlan plan;
  if (protocol == "mult") {
    plan.scalar_triples = n;
  } else if (protocol == "relu") {
    plan.ot_count = n * std::size_t(l);  // one OT per evaluator input wire
  } else if (protocol == "maxpool") {
    plan.ot_count = n * 3 * std::size_t(l);  // three comparisons per window
  } else {
    throw ConfigError("unknown benchmark protocol: " + protocol);
  }
  return plan;
}

void cmd_dealer(const DealerArgs& a) {
  FixedPointConfig fp;
  fp.l = a.l;
  fp.f = a.f;
  fp.validate();
  u64 seed = resolve_seed(a.seed) ^ kDealerSalt;
  DealerPlan plan = a.bench.empty()
                        ? plan_nas_search(a.nas.net(), a.nas.train(a.seed), a.nas.train_count,
                                          a.nas.val_count)
                        : plan_bench(a.bench, a.bench_n, a.l);
  DealerArtifacts art = dealer_generate(seed, fp, plan, a.out);
  std::size_t mat_words = 0;
  for (const auto& m : plan.matrices) mat_words += m[0] * m[1] + m[1] * m[2] + m[0] * m[2];
  std::printf("dealer: %llu scalar triples, %zu matrix triples (%zu words), %llu OTs -> %s, %s\n",
              static_cast<unsigned long long>(plan.scalar_triples), plan.matrices.size(),
              mat_words, static_cast<unsigned long long>(plan.ot_count), art.path0.c_str(),
              art.path1.c_str());
}

// --- bench ---------------------------------------------------------------

struct BenchArgs {
  std::string protocol;
  std::size_t n = 100;
  int l = 64, f = 16;
  u64 seed = 1;
  std::string dealer;  // artifact directory; empty runs the in-process dealer
  std::string out = "reports";
};

void bench_body(Session& s, const std::string& protocol, std::size_t n) {
  s.handshake();
  const auto& fp = s.fp();
  const u64 m = 0x123456789abcdefULL & fp.mask();  // fixed counterpart share
  auto share_of = [&](double v) {
    u64 r = encode(v, fp);
    return s.me() == PartyId::p0 ? ring_sub(r, m, fp) : m;
  };
  for (std::size_t i = 0; i < n; ++i) {
    double v = (i % 2 ? 1.0 : -1.0) * (0.5 + 0.001 * double(i % 500));
    if (protocol == "relu") {
      std::vector<u64> x{share_of(v)};
      secure_relu(s, x);
    } else if (protocol == "maxpool") {
      std::vector<u64> x{share_of(v), share_of(v - 0.25), share_of(-v), share_of(v + 0.125)};
      secure_maxpool(s, x, 2, 2);
    } else {
      std::vector<u64> x{share_of(v)}, y{share_of(1.0 - v)};
      mul_shares(s, x, y);
    }
  }
}

void cmd_bench(const BenchArgs& a) {
  if (a.protocol != "relu" && a.protocol != "maxpool" && a.protocol != "mult")
    throw ConfigError("unknown benchmark protocol: " + a.protocol);
  SessionConfig cfg;
  cfg.fp.l = a.l;
  cfg.fp.f = a.f;
  cfg.fp.validate();
  cfg.seed = resolve_seed(a.seed);

  double mean_kb = 0, mean_sec = 0;
  if (a.n) {
    double bytes = 0, secs = 0;
    auto p0 = [&](Session& s) {
      auto t0 = std::chrono::steady_clock::now();
      u64 before = s.stats().total_sent + s.stats().total_received;
      bench_body(s, a.protocol, a.n);
      bytes = double(s.stats().total_sent + s.stats().total_received - before);
      secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto p1 = [&](Session& s) { bench_body(s, a.protocol, a.n); };
    if (a.dealer.empty()) {
      run_pair(cfg, cfg.seed ^ kDealerSalt, p0, p1);
    } else {
      auto path = [&](const char* n) {
        return (std::filesystem::path(a.dealer) / n).string();
      };
      FileDealerSource d0(path("party0.deal"), PartyId::p0, cfg.fp);
      FileDealerSource d1(path("party1.deal"), PartyId::p1, cfg.fp);
      run_pair_with_sources(cfg, d0, d1, p0, p1);
    }
    mean_kb = CommStats::kb(u64(bytes)) / double(a.n);
    mean_sec = secs / double(a.n);
  }

  ExperimentReport r;
  r.id = "bench-" + a.protocol;
  json j{{"experiment", r.id},
         {"protocol", a.protocol},
         {"n", a.n},
         {"l", a.l},
         {"f", a.f},
         {"seed", cfg.seed}};
  r.config_json = j.dump(2);
  r.columns = {"protocol", "n", "mean_kb", "mean_seconds"};
  if (a.n)
    r.add_row({a.protocol, std::to_string(a.n), fmt_double(mean_kb, 3), fmt_double(mean_sec, 6)});
  write_report(r, a.out);
  std::fputs(comm_table({{a.protocol, mean_kb, mean_sec}}).c_str(), stdout);
}

// --- softmax-exp ---------------------------------------------------------

struct SoftmaxExpArgs {
  std::vector<int> L{1, 2, 4, 6};
  int epochs = 5;
  std::size_t subset = 10000, test = 2000, batch = 128;
  u64 seed = 7, data_seed = 2026;
  double threshold = 0.934;
  std::string out = "reports";
};

void cmd_softmax_exp(const SoftmaxExpArgs& a) {
  Corpus c = synth_corpus(a.subset, a.test, a.data_seed, 10);
  OracleNetwork net;  // 784-128-10

  ExperimentReport r;
  r.id = "softmax-exp";
  json j{{"experiment", r.id},          {"L", a.L},
         {"epochs", a.epochs},          {"subset", a.subset},
         {"test", a.test},              {"batch", a.batch},
         {"seed", resolve_seed(a.seed)}, {"data_seed", a.data_seed},
         {"threshold", a.threshold}};
  r.config_json = j.dump(2);
  r.columns = {"variant",      "L",        "epoch",
               "train_loss",   "test_accuracy", "wall_seconds",
               "overflow",     "epochs_to_threshold", "seconds_to_threshold"};

  auto run_one = [&](SoftmaxKind kind, int L, const std::string& name) {
    OracleTrainConfig cfg;
    cfg.kind = kind;
    cfg.L = L;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.seed = resolve_seed(a.seed);
    TrainTrajectory t =
        oracle_train(net, c.train.images, c.train.labels, c.test.images, c.test.labels, cfg);
    int hit = -1;
    for (std::size_t e = 0; e < t.accuracy.size(); ++e)
      if (t.accuracy[e] >= a.threshold) {
        hit = int(e) + 1;
        break;
      }
    double hit_sec = hit > 0 ? t.epoch_seconds[std::size_t(hit) - 1] : -1.0;
    for (std::size_t e = 0; e < t.loss.size(); ++e)
      r.add_row({name, std::to_string(L), std::to_string(e + 1), fmt_double(t.loss[e], 6),
                 fmt_double(t.accuracy[e], 4), fmt_double(t.epoch_seconds[e], 3),
                 t.overflow ? "1" : "0", std::to_string(hit), fmt_double(hit_sec, 3)});
    double final_acc = t.accuracy.empty() ? 0.0 : t.accuracy.back();
    std::printf("%-4s L=%d final_accuracy=%.4f overflow=%d epochs_to_%.1f%%=%d\n", name.c_str(),
                L, final_acc, int(t.overflow), a.threshold * 100, hit);
  };

  run_one(SoftmaxKind::f1, 0, "f1");
  for (int L : a.L) run_one(SoftmaxKind::f2, L, "f2");
  write_report(r, a.out);
}

// --- nas-search ----------------------------------------------------------

struct NasArgs {
  int role = -1;  // -1 hosts both parties in process
  std::string listen, connect;
  u64 seed = 1, data_seed = 11;
  int l = 64, f = 16;
  NasShape shape;
  std::size_t subset = 0;
  std::string dealer, checkpoint, out = "reports";
  bool oracle = false;
};

struct NasResult {
  std::vector<double> train_ce, val_ce, seconds;
  Architecture arch;
  std::size_t first_epoch = 0;  // nonzero when resumed from a checkpoint
};

void emit_nas_report(const NasArgs& a, const NasResult& res, const SupernetConfig& ncfg,
                     const std::string& mode) {
  ExperimentReport r;
  r.id = a.oracle ? "nas-search-oracle" : "nas-search";
  json j{{"experiment", r.id},
         {"mode", mode},
         {"seed", resolve_seed(a.seed)},
         {"data_seed", a.data_seed},
         {"l", a.l},
         {"f", a.f},
         {"L", a.shape.L},
         {"epochs", a.shape.epochs},
         {"batch", a.shape.batch},
         {"train_count", a.shape.train_count},
         {"val_count", a.shape.val_count},
         {"width", a.shape.width},
         {"layers", a.shape.layers},
         {"classes", a.shape.classes},
         {"architecture", res.arch.units}};
  r.config_json = j.dump(2);
  r.columns = {"epoch", "train_ce", "val_ce", "wall_seconds"};
  for (std::size_t e = 0; e < res.train_ce.size(); ++e)
    r.add_row({std::to_string(res.first_epoch + e + 1), fmt_double(res.train_ce[e], 6),
               fmt_double(res.val_ce[e], 6), fmt_double(res.seconds[e], 3)});
  write_report(r, a.out);

  std::filesystem::create_directories(a.out);
  std::string arch_path = (std::filesystem::path(a.out) / (r.id + "-architecture.txt")).string();
  std::ofstream arch_out(arch_path);
  arch_out << describe(res.arch, ncfg) << "\n";
  for (std::size_t i = 0; i < res.arch.units.size(); ++i)
    arch_out << "layer " << i << ": unit " << res.arch.units[i] << "\n";

  for (std::size_t e = 0; e < res.train_ce.size(); ++e)
    std::printf("epoch %zu: L_W=%.4f L_A=%.4f t=%.1fs\n", res.first_epoch + e + 1,
                res.train_ce[e], res.val_ce[e], res.seconds[e]);
  std::printf("architecture: %s\n", describe(res.arch, ncfg).c_str());
}

void cmd_nas(const NasArgs& a) {
  SupernetConfig ncfg = a.shape.net();
  TrainConfig tcfg = a.shape.train(resolve_seed(a.seed));
  FixedPointConfig fp;
  fp.l = a.l;
  fp.f = a.f;
  fp.validate();
  SessionConfig cfg;
  cfg.fp = fp;
  cfg.seed = tcfg.seed;
  cfg.allow_test_reveals = true;  // the joint test flag: loss curves are disclosed
  const u64 dealer_seed = cfg.seed ^ kDealerSalt;

  std::size_t train_count = a.shape.train_count;
  if (a.subset && a.subset < train_count) train_count = a.subset;

  Corpus c = synth_corpus(train_count, a.shape.val_count, a.data_seed, ncfg.classes);
  downsample2(c.train);
  downsample2(c.test);
  if (c.train.dim() != ncfg.input_dim)
    throw ConfigError("nas-search expects 14x14 inputs after downsampling");

  if (a.oracle) {
    PlainSplit train{c.train.count, c.train.dim(), ncfg.classes, c.train.images,
                     c.train.labels};
    PlainSplit val{c.test.count, c.test.dim(), ncfg.classes, c.test.images, c.test.labels};
    OracleNasOutcome o = nas_search_oracle(ncfg, tcfg, train, val,
                                           OracleMode::real_arithmetic, dealer_seed, cfg,
                                           a.data_seed);
    NasResult res{o.epoch_loss, o.epoch_val_loss, o.epoch_seconds, o.arch};
    emit_nas_report(a, res, ncfg, "oracle");
    std::printf("validation accuracy: %.4f\n", o.val_accuracy);
    return;
  }

  auto [tr0, tr1] = share_split(c.train.images, c.train.labels, c.train.dim(), ncfg.classes,
                                a.data_seed, fp);
  auto [va0, va1] = share_split(c.test.images, c.test.labels, c.test.dim(), ncfg.classes,
                                a.data_seed + 1, fp);

  NasResult res;
  auto party = [&](Session& s, const SharedSplit& tr, const SharedSplit& va) {
    s.handshake();
    std::string ckpt = a.checkpoint.empty()
                           ? std::string()
                           : a.checkpoint + (s.me() == PartyId::p0 ? ".p0" : ".p1");
    NasOutcome out = pp_nas_search(s, ncfg, tcfg, tr, va, ckpt);
    std::vector<u64> lw = s.reveal(out.epoch_loss, RevealSanction::test_flag);
    std::vector<u64> la = s.reveal(out.epoch_val_loss, RevealSanction::test_flag);
    Architecture arch = derive_architecture(s, out.net.alpha, ncfg, true);
    if (s.me() == PartyId::p0) {
      for (u64 v : lw) res.train_ce.push_back(decode(v, fp));
      for (u64 v : la) res.val_ce.push_back(decode(v, fp));
      res.seconds = out.epoch_seconds;
      res.arch = arch;
      res.first_epoch = out.epochs_done - out.epoch_loss.size();
    }
  };

  if (a.role < 0) {
    auto p0 = [&](Session& s) { party(s, tr0, va0); };
    auto p1 = [&](Session& s) { party(s, tr1, va1); };
    if (a.dealer.empty()) {
      run_pair(cfg, dealer_seed, p0, p1);
    } else {
      auto path = [&](const char* n) {
        return (std::filesystem::path(a.dealer) / n).string();
      };
      FileDealerSource d0(path("party0.deal"), PartyId::p0, fp);
      FileDealerSource d1(path("party1.deal"), PartyId::p1, fp);
      run_pair_with_sources(cfg, d0, d1, p0, p1);
    }
    emit_nas_report(a, res, ncfg, "in-process");
    return;
  }

  // one role per process over TCP
  PartyId me = a.role == 0 ? PartyId::p0 : PartyId::p1;
  std::unique_ptr<TcpTransport> tr;
  if (me == PartyId::p0) {
    if (a.listen.empty()) throw ConfigError("--role 0 needs --listen host:port");
    auto [host, port] = split_endpoint(a.listen);
    tr = TcpTransport::listen(host, port);
  } else {
    if (a.connect.empty()) throw ConfigError("--role 1 needs --connect host:port");
    auto [host, port] = split_endpoint(a.connect);
    tr = TcpTransport::connect(host, port);
  }
  std::unique_ptr<TripleSource> src;
  if (a.dealer.empty()) {
    src = std::make_unique<LazyDealerSource>(dealer_seed, me, fp);
  } else {
    auto p = std::filesystem::path(a.dealer) /
             (me == PartyId::p0 ? "party0.deal" : "party1.deal");
    src = std::make_unique<FileDealerSource>(p.string(), me, fp);
  }
  Session s(me, cfg, *tr, *src);
  party(s, me == PartyId::p0 ? tr0 : tr1, me == PartyId::p0 ? va0 : va1);
  if (me == PartyId::p0) emit_nas_report(a, res, ncfg, "tcp");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-party secure computation toolkit: shared arithmetic, garbled"
               " comparisons, approximated Softmax and architecture search"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate the deterministic stand-in corpus");
  synth->add_option("--train", synth_args.train, "training samples");
  synth->add_option("--test", synth_args.test, "test samples");
  synth->add_option("--classes", synth_args.classes, "class count");
  synth->add_option("--seed", synth_args.seed, "corpus seed");
  synth->add_option("--out", synth_args.out, "output directory");

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "parse an IDX image/label pair");
  ingest->add_option("--images", ingest_args.images, "IDX image file")->required();
  ingest->add_option("--labels", ingest_args.labels, "IDX label file")->required();
  ingest->add_option("--subset", ingest_args.subset, "keep the first n records");
  ingest->add_option("--downsample", ingest_args.downsample, "halve to this side length");
  ingest->add_option("--out", ingest_args.out, "re-emit the processed pair here");

  DealerArgs dealer_args;
  auto* dealer = app.add_subcommand("dealer", "pre-generate correlated randomness files");
  dealer->add_option("--out", dealer_args.out, "artifact directory");
  dealer->add_option("--seed", dealer_args.seed, "session seed the run will use");
  dealer->add_option("--l", dealer_args.l, "ring width");
  dealer->add_option("--f", dealer_args.f, "fraction bits");
  dealer->add_option("--bench", dealer_args.bench, "size for this benchmark protocol instead");
  dealer->add_option("--n", dealer_args.bench_n, "benchmark invocation count");
  dealer->add_option("--epochs", dealer_args.nas.epochs, "search epochs");
  dealer->add_option("--batch", dealer_args.nas.batch, "search batch size");
  dealer->add_option("--train-count", dealer_args.nas.train_count, "training split size");
  dealer->add_option("--val-count", dealer_args.nas.val_count, "validation split size");
  dealer->add_option("--width", dealer_args.nas.width, "layer width");
  dealer->add_option("--layers", dealer_args.nas.layers, "searched layers");
  dealer->add_option("--classes", dealer_args.nas.classes, "class count");
  dealer->add_option("--L", dealer_args.nas.L, "Softmax exponent");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "per-protocol traffic and timing");
  bench->add_option("protocol", bench_args.protocol, "relu | maxpool | mult")->required();
  bench->add_option("--n", bench_args.n, "invocations");
  bench->add_option("--l", bench_args.l, "ring width");
  bench->add_option("--f", bench_args.f, "fraction bits");
  bench->add_option("--seed", bench_args.seed, "session seed");
  bench->add_option("--dealer", bench_args.dealer, "artifact directory");
  bench->add_option("--out", bench_args.out, "report directory");

  SoftmaxExpArgs sm_args;
  auto* sm = app.add_subcommand("softmax-exp",
                                "accuracy of the two Softmax trainings across L");
  sm->add_option("--L", sm_args.L, "exponent list for the power-function variant")
      ->delimiter(',');
  sm->add_option("--epochs", sm_args.epochs, "training epochs");
  sm->add_option("--subset", sm_args.subset, "training samples");
  sm->add_option("--test", sm_args.test, "test samples");
  sm->add_option("--batch", sm_args.batch, "batch size");
  sm->add_option("--seed", sm_args.seed, "training seed");
  sm->add_option("--data-seed", sm_args.data_seed, "corpus seed");
  sm->add_option("--threshold", sm_args.threshold, "accuracy threshold for timing");
  sm->add_option("--out", sm_args.out, "report directory");

  NasArgs nas_args;
  auto* nas = app.add_subcommand("nas-search", "privacy-preserving architecture search");
  nas->add_option("--role", nas_args.role, "0 or 1; omit to host both parties");
  nas->add_option("--listen", nas_args.listen, "host:port for role 0");
  nas->add_option("--connect", nas_args.connect, "host:port for role 1");
  nas->add_option("--seed", nas_args.seed, "session seed");
  nas->add_option("--data-seed", nas_args.data_seed, "corpus and sharing seed");
  nas->add_option("--l", nas_args.l, "ring width");
  nas->add_option("--f", nas_args.f, "fraction bits");
  nas->add_option("--L", nas_args.shape.L, "Softmax exponent");
  nas->add_option("--epochs", nas_args.shape.epochs, "search epochs");
  nas->add_option("--batch", nas_args.shape.batch, "batch size");
  nas->add_option("--train-count", nas_args.shape.train_count, "training split size");
  nas->add_option("--val-count", nas_args.shape.val_count, "validation split size");
  nas->add_option("--subset", nas_args.subset, "cap the training split");
  nas->add_option("--width", nas_args.shape.width, "layer width");
  nas->add_option("--layers", nas_args.shape.layers, "searched layers");
  nas->add_option("--classes", nas_args.shape.classes, "class count");
  nas->add_option("--dealer", nas_args.dealer, "artifact directory");
  nas->add_option("--checkpoint", nas_args.checkpoint, "checkpoint path base");
  nas->add_option("--out", nas_args.out, "report directory");
  nas->add_flag("--oracle", nas_args.oracle, "run the plaintext baseline instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) cmd_synth(synth_args);
    if (ingest->parsed()) cmd_ingest(ingest_args);
    if (dealer->parsed()) cmd_dealer(dealer_args);
    if (bench->parsed()) cmd_bench(bench_args);
    if (sm->parsed()) cmd_softmax_exp(sm_args);
    if (nas->parsed()) cmd_nas(nas_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return 3;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
