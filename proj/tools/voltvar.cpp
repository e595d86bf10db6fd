// voltvar: command-line front end for the two-stage Volt/VAr toolkit.
//
// Every subcommand writes its CSV outputs into --out together with
// manifest.txt, which records the command line, seed, network and results.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voltvar/voltvar.hpp"

namespace fs = std::filesystem;
using namespace voltvar;

namespace {

constexpr const char* kVersion = "voltvar 0.1.0";

struct Globals {
  std::string network = "ieee33";
  std::uint64_t seed = 1;
  std::string out = "voltvar_out";
};

// Short names for the bundled feeders; anything else is a file path.
std::string resolve_network_path(const std::string& name) {
  if (fs::exists(name)) return name;
  const std::string dir = std::string(VOLTVAR_DATA_DIR) + "/feeders/";
  if (name == "ieee13") return dir + "ieee13_reconstruction.json";
  if (name == "ieee33") return dir + "ieee33.json";
  if (name == "ieee123") return dir + "ieee123_reconstruction.json";
  throw std::runtime_error("no network file or bundled feeder named '" + name + "'");
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

class Run {
 public:
  Run(const Globals& g, std::string command, int argc, char** argv)
      : g_(g), command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
    for (int i = 0; i < argc; ++i) argv_ += (i ? " " : "") + std::string(argv[i]);
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    started_ = buf;
    fs::create_directories(g_.out);
    network_path_ = resolve_network_path(g_.network);
    net_ = load_network(network_path_);
  }

  [[nodiscard]] const RadialNetwork& net() const { return net_; }
  [[nodiscard]] std::uint64_t seed() const { return g_.seed; }

  std::ofstream open(const std::string& file) {
    files_.push_back(file);
    std::ofstream os(fs::path(g_.out) / file);
    if (!os) throw std::runtime_error("cannot write " + (fs::path(g_.out) / file).string());
    os << std::setprecision(17);
    return os;
  }
  [[nodiscard]] std::string path(const std::string& file) {
    files_.push_back(file);
    return (fs::path(g_.out) / file).string();
  }

  template <class T>
  void note(const std::string& key, const T& value) {
    std::ostringstream os;
    os << std::boolalpha << std::setprecision(17) << value;
    notes_.emplace_back(key, os.str());
  }

  void finish() {
    std::ofstream os(fs::path(g_.out) / "manifest.txt");
    os << "tool: " << kVersion << "\n"
       << "command: " << command_ << "\n"
       << "argv: " << argv_ << "\n"
       << "started_utc: " << started_ << "\n"
       << "network: " << net_.name() << "\n"
       << "network_file: " << fs::absolute(network_path_).string() << "\n"
       << "buses: " << net_.bus_count() << "\n"
       << "pv_units: " << net_.pv_buses().size() << "\n"
       << "seed: " << g_.seed << "\n";
    for (const auto& [k, v] : notes_) os << k << ": " << v << "\n";
    os << "elapsed_seconds: " << std::setprecision(6)
       << std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() << "\n"
       << "outputs:";
    for (const auto& f : files_) os << " " << f;
    os << " manifest.txt\n";
    std::cout << "wrote " << files_.size() + 1 << " files to " << g_.out << "\n";
  }

 private:
  Globals g_;
  std::string command_, argv_, started_, network_path_;
  std::chrono::steady_clock::time_point start_;
  RadialNetwork net_;
  std::vector<std::string> files_;
  std::vector<std::pair<std::string, std::string>> notes_;
};

struct Scheduled {
  Stage1Schedule schedule;
  RadialNetwork net;
};

Scheduled schedule_network(Run& run) {
  Scheduled s;
  s.schedule = solve_stage1(make_stage1_problem(run.net()));
  if (!s.schedule.feasible) std::cerr << "warning: first-stage schedule violates voltage limits\n";
  s.net = apply_schedule(run.net(), s.schedule);
  run.note("stage1_tap", s.schedule.tap);
  return s;
}

void write_sensitivities(std::ostream& os, const RadialNetwork& net, const SensitivityMatrix& K) {
  os << "bus,pv_bus,dv_dp,dv_dq\n";
  for (Eigen::Index r = 0; r < K.rows(); ++r)
    for (Eigen::Index c = 0; c < K.cols(); ++c)
      os << net.label(static_cast<BusIndex>(r + 1)) << "," << net.label(K.columns[static_cast<std::size_t>(c)]) << ","
         << K.kp(r, c) << "," << K.kq(r, c) << "\n";
}

void write_slopes(std::ostream& os, const RadialNetwork& net, const SlopeVector& alpha) {
  os << "pv_bus,alpha\n";
  for (std::size_t k = 0; k < net.pv_buses().size(); ++k)
    os << net.label(net.pv_buses()[k]) << "," << alpha[static_cast<Eigen::Index>(k)] << "\n";
}

std::vector<BusIndex> read_bus_file(const RadialNetwork& net, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (line.rfind("bus,", 0) != 0) throw std::runtime_error(path + ": expected a bus list written by select-buses");
  std::vector<BusIndex> out;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string label, selected, in_model;
    std::getline(ss, label, ',');
    std::getline(ss, selected, ',');
    std::getline(ss, in_model, ',');
    if (in_model == "1") out.push_back(net.index_of(std::stoi(label)));
  }
  return out;
}

struct LearnOptions {
  std::size_t samples = 2000;
  double load_diversity = 0.0;
  std::size_t n_sel = 30;
  double lambda = 1e-4;
  std::string hidden = "128,128";
  int epochs = 200;
  double lr = 1e-3;
};

void add_learn_options(CLI::App* c, LearnOptions& o, bool with_data) {
  if (with_data) {
    c->add_option("--samples", o.samples, "dataset size when no --data is given");
    c->add_option("--load-diversity", o.load_diversity, "per-bus load spread around the system level");
  }
  c->add_option("--hidden", o.hidden, "hidden layer widths, comma separated");
  c->add_option("--epochs", o.epochs);
  c->add_option("--lr", o.lr, "learning rate");
}

MlpHyper hyper(const LearnOptions& o, std::uint64_t seed) {
  MlpHyper hp;
  hp.hidden = parse_int_list(o.hidden);
  hp.epochs = o.epochs;
  hp.learning_rate = o.lr;
  hp.seed = seed;
  return hp;
}

Dataset make_dataset(Run& run, const RadialNetwork& scheduled, const LearnOptions& o) {
  DatasetOptions d;
  d.count = o.samples;
  d.load_diversity = o.load_diversity;
  d.seed = run.seed();
  Dataset ds = generate_dataset(scheduled, d);
  run.note("dataset_samples", ds.size());
  run.note("dataset_failures", ds.failures);
  return ds;
}

void report_training(Run& run, const TrainResult& tr) {
  run.note("train_mae", tr.report.train_mae);
  run.note("validation_mae", tr.report.validation_mae);
  run.note("parameters", tr.model.parameter_count());
  for (const auto& w : tr.report.warnings) {
    std::cerr << "warning: " << w << "\n";
    run.note("warning", w);
  }
  auto os = run.open("training_curve.csv");
  os << "epoch,objective\n";
  for (std::size_t e = 0; e < tr.report.epoch_objective.size(); ++e) os << e + 1 << "," << tr.report.epoch_objective[e] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage Volt/VAr control toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Globals g;
  app.add_option("--network", g.network, "feeder JSON file or one of ieee13, ieee33, ieee123")->capture_default_str();
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.fallthrough();

  // pf
  auto* pf = app.add_subcommand("pf", "power flow and voltage sensitivities at the nominal point");
  std::string pf_solver = "ac", pf_sens = "jacobian";
  double pf_eps = 1e-5;
  bool pf_scheduled = false;
  pf->add_option("--solver", pf_solver)->check(CLI::IsMember({"ac", "lindistflow"}));
  pf->add_option("--sensitivity", pf_sens)->check(CLI::IsMember({"none", "jacobian", "perturb"}));
  pf->add_option("--eps", pf_eps, "perturbation size for --sensitivity perturb");
  pf->add_flag("--scheduled", pf_scheduled, "apply the first-stage schedule first");

  // stage1
  auto* s1 = app.add_subcommand("stage1", "first-stage tap, capacitor and inverter schedule");
  Stage1Options s1opt;
  s1->add_option("--enumeration-limit", s1opt.enumeration_limit,
                 "enumerate when at most this many discrete combinations are ramp-feasible");

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "sample operating points with their sensitivity labels");
  LearnOptions gd_opt;
  gd->add_option("--count", gd_opt.samples);
  gd->add_option("--load-diversity", gd_opt.load_diversity);

  // select-buses
  auto* sb = app.add_subcommand("select-buses", "choose measurement buses by bidirectional search");
  std::string sb_data;
  LearnOptions sb_opt;
  sb->add_option("--data", sb_data, "dataset CSV from gen-data")->required();
  sb->add_option("--n-sel", sb_opt.n_sel)->capture_default_str();
  sb->add_option("--lambda", sb_opt.lambda, "ridge regularization of the selection proxy");

  // train
  auto* tr = app.add_subcommand("train", "train the sensitivity model");
  std::string tr_data, tr_buses;
  LearnOptions tr_opt;
  tr->add_option("--data", tr_data, "dataset CSV from gen-data")->required();
  tr->add_option("--buses", tr_buses, "bus list from select-buses (default: select --n-sel buses)");
  tr->add_option("--n-sel", tr_opt.n_sel)->capture_default_str();
  add_learn_options(tr, tr_opt, false);

  // slopes
  auto* sl = app.add_subcommand("slopes", "affine droop slopes for the inverters");
  std::string sl_mode = "consensus", sl_model;
  double sl_unc = 0.5;
  ConsensusOptions sl_cons;
  sl->add_option("--mode", sl_mode)->check(CLI::IsMember({"centralized", "consensus"}));
  sl->add_option("--model", sl_model, "trained model JSON (default: Jacobian sensitivities)");
  sl->add_option("--uncertainty", sl_unc, "PV deviation as a fraction of the forecast");
  sl->add_option("--rho", sl_cons.rho);
  sl->add_option("--max-iter", sl_cons.max_iter);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Monte Carlo comparison of the control schemes");
  std::string ev_schemes = "1,2,3,4", ev_model;
  std::size_t ev_scenarios = 500;
  double ev_unc = 0.5;
  bool ev_full = false, ev_ever = false;
  LearnOptions ev_opt;
  ev->add_option("--schemes", ev_schemes)->capture_default_str();
  ev->add_option("--scenarios", ev_scenarios)->capture_default_str();
  ev->add_flag("--full", ev_full, "1500 scenarios");
  ev->add_option("--uncertainty", ev_unc)->capture_default_str();
  ev->add_option("--model", ev_model, "trained model for scheme 4 (default: train one here)");
  ev->add_option("--n-sel", ev_opt.n_sel, "measurement buses when training here");
  ev->add_flag("--buses-ever-violated", ev_ever, "violation ratio over buses instead of bus-scenario pairs");
  add_learn_options(ev, ev_opt, true);

  // sweep
  auto* sw = app.add_subcommand("sweep", "validation MAE against the number of selected buses");
  std::string sw_data, sw_nsel = "5,10,15,20,25,30";
  LearnOptions sw_opt;
  sw->add_option("--data", sw_data, "dataset CSV (default: generate one)");
  sw->add_option("--n-sel", sw_nsel, "comma separated, ascending")->capture_default_str();
  sw->add_option("--lambda", sw_opt.lambda);
  add_learn_options(sw, sw_opt, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pf) {
      Run run(g, "pf", argc, argv);
      RadialNetwork net = run.net();
      if (pf_scheduled) net = schedule_network(run).net;
      const OperatingPoint op = nominal_operating_point(net);
      const PowerFlowSolution sol = pf_solver == "ac" ? solve_ac(net, op) : solve_lindistflow(net, op);
      run.note("solver", pf_solver);
      run.note("converged", sol.converged);
      run.note("iterations", sol.iterations);
      run.note("total_loss", sol.total_loss);
      run.note("min_voltage", sol.voltage.minCoeff());
      {
        auto os = run.open("pf_buses.csv");
        os << "bus,voltage,angle_deg,p,q\n";
        for (BusIndex b = 0; b < net.bus_count(); ++b) {
          const auto i = static_cast<Eigen::Index>(b);
          os << net.label(b) << "," << sol.voltage[i] << "," << sol.angle[i] * 180.0 / M_PI << "," << op.p[i] << ","
             << op.q[i] << "\n";
        }
      }
      {
        auto os = run.open("pf_lines.csv");
        os << "from,to,p,q\n";
        for (std::size_t l = 0; l < net.lines().size(); ++l)
          os << net.label(net.lines()[l].from) << "," << net.label(net.lines()[l].to) << ","
             << sol.line_p[static_cast<Eigen::Index>(l)] << "," << sol.line_q[static_cast<Eigen::Index>(l)] << "\n";
      }
      if (pf_sens != "none" && !net.pv_buses().empty()) {
        const SensitivityMatrix K =
            pf_sens == "jacobian" ? sensitivities_jacobian(net, op) : sensitivities_perturb(net, op, pf_eps);
        auto os = run.open("sensitivities.csv");
        write_sensitivities(os, net, K);
      }
      run.finish();
    } else if (*s1) {
      Run run(g, "stage1", argc, argv);
      const Stage1Problem prob = make_stage1_problem(run.net());
      Stage1Stats stats;
      const Stage1Schedule s = solve_stage1(prob, s1opt, &stats);
      const Stage1Audit audit = audit_schedule(prob, s);
      run.note("objective_loss", s.objective_loss);
      run.note("feasible", s.feasible);
      run.note("combinations", stats.combinations);
      run.note("visited", stats.visited);
      run.note("qp_solves", stats.qp_solves);
      run.note("branch_and_bound", stats.used_branch_and_bound);
      run.note("bnb_nodes", stats.nodes);
      run.note("audit_ok", audit.ok());
      run.note("audit_max_violation", audit.max_violation);
      for (const auto& f : audit.failures) run.note("audit_failure", f);
      auto os = run.open("stage1_schedule.csv");
      os << "device,bus,value\n";
      os << "tap," << run.net().label(0) << "," << s.tap << "\n";
      for (std::size_t k = 0; k < s.cap_steps.size(); ++k)
        os << "capacitor," << run.net().label(run.net().capbank_buses()[k]) << "," << s.cap_steps[k] << "\n";
      for (std::size_t k = 0; k < s.q_base.size(); ++k)
        os << "inverter_q," << run.net().label(run.net().pv_buses()[k]) << "," << s.q_base[k] << "\n";
      run.finish();
      if (!audit.ok()) return 2;
    } else if (*gd) {
      Run run(g, "gen-data", argc, argv);
      const Scheduled sc = schedule_network(run);
      const Dataset ds = make_dataset(run, sc.net, gd_opt);
      run.note("load_diversity", gd_opt.load_diversity);
      save_dataset(ds, run.path("dataset.csv"));
      run.finish();
    } else if (*sb) {
      Run run(g, "select-buses", argc, argv);
      const Dataset ds = load_dataset(sb_data);
      const BusSelection sel = select_buses(ds, sb_opt.n_sel, sb_opt.lambda);
      const std::vector<BusIndex> model = merge_with_pv(sel.selected, run.net());
      run.note("n_sel", sb_opt.n_sel);
      run.note("model_buses", model.size());
      run.note("forward_calls", sel.raw.forward_calls);
      run.note("backward_calls", sel.raw.backward_calls);
      if (!sel.raw.eta.empty()) run.note("proxy_error", sel.raw.eta.back());
      {
        auto os = run.open("buses.csv");
        os << "bus,selected,in_model\n";
        for (BusIndex b = 1; b < run.net().bus_count(); ++b) {
          const bool s = std::find(sel.selected.begin(), sel.selected.end(), b) != sel.selected.end();
          const bool m = std::find(model.begin(), model.end(), b) != model.end();
          os << run.net().label(b) << "," << s << "," << m << "\n";
        }
      }
      auto os = run.open("selection_trace.csv");
      os << "step,direction,bus,error\n";
      for (std::size_t k = 0; k < sel.raw.eta.size() && k < sel.raw.selected.size(); ++k)
        os << k + 1 << ",forward," << ds.bus_labels[sel.raw.selected[k]] << "," << sel.raw.eta[k] << "\n";
      for (std::size_t k = 0; k < sel.raw.mu.size() && k < sel.raw.removed.size(); ++k)
        os << k + 1 << ",backward," << ds.bus_labels[sel.raw.removed[k]] << "," << sel.raw.mu[k] << "\n";
      run.finish();
    } else if (*tr) {
      Run run(g, "train", argc, argv);
      const Dataset ds = load_dataset(tr_data);
      std::vector<BusIndex> buses = tr_buses.empty() ? merge_with_pv(select_buses(ds, tr_opt.n_sel).selected, run.net())
                                                     : read_bus_file(run.net(), tr_buses);
      run.note("model_buses", buses.size());
      const TrainResult res = train_on_buses(ds, buses, run.net().pv_buses(), hyper(tr_opt, run.seed()));
      report_training(run, res);
      save_model(res.model, run.path("model.json"));
      run.finish();
    } else if (*sl) {
      Run run(g, "slopes", argc, argv);
      const Scheduled sc = schedule_network(run);
      std::optional<MlpModel> model;
      if (!sl_model.empty()) model = load_model(sl_model);
      const SensitivityMatrix K = scheme_sensitivities(
          sc.net, model ? SensitivitySource::learned : SensitivitySource::jacobian, model ? &*model : nullptr);
      const UncertaintySet U = build_uncertainty(sc.net, sl_unc);
      EvaluationOptions eo;
      eo.consensus = sl_cons;
      run.note("sensitivities", model ? "learned" : "jacobian");
      run.note("mode", sl_mode);
      run.note("uncertainty", sl_unc);
      if (sl_mode == "consensus") {
        const ConsensusResult c = run_consensus(K, U, sl_cons);
        run.note("converged", c.converged);
        run.note("iterations", c.trace.size());
        run.note("objective", aarc_objective(K, c.alpha, U));
        {
          auto os = run.open("slopes.csv");
          write_slopes(os, sc.net, c.alpha);
        }
        auto os = run.open("consensus_trace.csv");
        os << "iteration,primal_residual,dual_residual,objective\n";
        for (const auto& r : c.trace) os << r.k << "," << r.primal_residual << "," << r.dual_residual << "," << r.objective << "\n";
      } else {
        const SlopeResult r = compute_slopes(K, U, SolveMode::centralized, eo);
        run.note("objective", r.objective);
        auto os = run.open("slopes.csv");
        write_slopes(os, sc.net, r.alpha);
      }
      run.finish();
    } else if (*ev) {
      Run run(g, "evaluate", argc, argv);
      if (ev_full) ev_scenarios = 1500;
      const std::vector<int> schemes = parse_int_list(ev_schemes);
      ComparisonSetup setup = prepare_comparison(run.net(), ev_unc, ev_scenarios, run.seed());
      run.note("stage1_tap", setup.schedule.tap);
      run.note("scenarios", ev_scenarios);
      run.note("uncertainty", ev_unc);
      run.note("scenario_fingerprint", setup.scenarios.empty() ? 0 : scenario_fingerprint(setup.scenarios));
      if (std::find(schemes.begin(), schemes.end(), 4) != schemes.end()) {
        MlpModel model;
        if (!ev_model.empty()) {
          model = load_model(ev_model);
        } else {
          const Dataset ds = make_dataset(run, setup.scheduled, ev_opt);
          const auto buses = merge_with_pv(select_buses(ds, ev_opt.n_sel).selected, setup.scheduled);
          run.note("model_buses", buses.size());
          const TrainResult res = train_on_buses(ds, buses, setup.scheduled.pv_buses(), hyper(ev_opt, run.seed()));
          report_training(run, res);
          model = res.model;
          save_model(model, run.path("model.json"));
        }
        setup.k_learned = scheme_sensitivities(setup.scheduled, SensitivitySource::learned, &model);
        run.note("learned_k_mae", mae(setup.k_jacobian.flatten(), setup.k_learned->flatten()));
      }
      EvaluationOptions eo;
      if (ev_ever) eo.ratio_mode = RatioMode::buses_ever_violated;
      const Comparison c = run_comparison(setup, schemes, ev_unc, eo);
      for (std::size_t k = 0; k < c.reports.size(); ++k) {
        const int id = c.reports[k].scheme;
        {
          auto os = run.open("voltages_scheme_" + std::to_string(id) + ".csv");
          os << voltages_csv(setup.scheduled, c.reports[k]);
        }
        auto os = run.open("slopes_scheme_" + std::to_string(id) + ".csv");
        write_slopes(os, setup.scheduled, c.slopes[k].alpha);
        run.note("scheme_" + std::to_string(id) + "_violation_ratio_percent", c.reports[k].violation_ratio);
      }
      if (c.reports.size() >= 2) {
        auto os = run.open("comparison.csv");
        os << compare_report(c.reports);
        std::cout << compare_report(c.reports);
      }
      run.finish();
    } else if (*sw) {
      Run run(g, "sweep", argc, argv);
      const Scheduled sc = schedule_network(run);
      const Dataset ds = sw_data.empty() ? make_dataset(run, sc.net, sw_opt) : load_dataset(sw_data);
      std::vector<std::size_t> n_sel;
      for (int v : parse_int_list(sw_nsel)) {
        if (v < 1) throw std::invalid_argument("--n-sel values must be positive");
        n_sel.push_back(static_cast<std::size_t>(v));
      }
      const auto pts = mae_vs_nsel_sweep(sc.net, ds, n_sel, hyper(sw_opt, run.seed()), sw_opt.lambda);
      for (const auto& p : pts) run.note("n_sel_" + std::to_string(p.n_sel) + "_validation_mae", p.validation_mae);
      auto os = run.open("sweep.csv");
      os << sweep_csv(pts);
      std::cout << sweep_csv(pts);
      run.finish();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
