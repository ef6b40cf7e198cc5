#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "ewoc/service.hpp"
#include "ewoc/simulator.hpp"

using namespace ewoc;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

/// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<double> list_of(const std::string& text) { return parse_covariate_query(text); }

std::vector<int> int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : list_of(text)) out.push_back(static_cast<int>(v));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Escalation with overdose control: design, conduct and simulate dose-finding trials"};
  app.require_subcommand(1);
  // parent options such as --reps may follow the subcommand name
  app.fallthrough();

  std::string config_path, data_dir = env_or("EWOC_DATA_DIR", "ewoc-data"), out_path, id, covariates;
  std::string scenarios_path, alphas, cons_list, size_list;
  std::uint64_t seed = 1;
  int reps = 1000, n = 30, patient = 0, dlt = -1, port = std::stoi(env_or("EWOC_PORT", "8080"));
  double beta0 = 0.0;
  std::optional<double> margin;
  std::optional<std::uint64_t> expected_version;
  bool dry_run = false;

  auto* design = app.add_subcommand("design", "Design-time checks")->require_subcommand(1);
  auto* validate_cmd = design->add_subcommand("validate", "Validate a trial configuration");
  validate_cmd->add_option("--config", config_path, "Trial configuration (JSON)")->required();

  auto* trial = app.add_subcommand("trial", "File-backed trial conduct")->require_subcommand(1);
  trial->add_option("--data-dir", data_dir, "Event log directory")->envname("EWOC_DATA_DIR");
  auto* t_new = trial->add_subcommand("new", "Create a trial and assign patient 1");
  t_new->add_option("--config", config_path)->required();
  t_new->add_option("--covariates", covariates, "Comma-separated covariates of patient 1");
  auto* t_next = trial->add_subcommand("next", "Enroll the next patient at the recommended dose");
  t_next->add_option("--id", id)->required();
  t_next->add_option("--covariates", covariates);
  t_next->add_option("--expected-version", expected_version);
  t_next->add_flag("--dry-run", dry_run, "Show the recommendation without enrolling");
  auto* t_outcome = trial->add_subcommand("outcome", "Record a DLT outcome");
  t_outcome->add_option("--id", id)->required();
  t_outcome->add_option("--patient", patient)->required();
  t_outcome->add_option("--dlt", dlt)->required()->check(CLI::IsMember({0, 1}));
  t_outcome->add_option("--expected-version", expected_version);
  auto* t_report = trial->add_subcommand("report", "Trial state, posterior summary and MTD estimate");
  t_report->add_option("--id", id)->required();
  t_report->add_option("--covariates", covariates);

  auto* sim = app.add_subcommand("simulate", "Operating characteristics by simulation")->require_subcommand(1);
  sim->add_option("--config", config_path)->required();
  sim->add_option("--seed", seed);
  sim->add_option("--reps", reps);
  sim->add_option("--out", out_path, "Output file; stdout when omitted");
  auto* s_oc = sim->add_subcommand("oc", "Operating characteristics per scenario");
  s_oc->add_option("--scenarios", scenarios_path, "Scenario file; the default suite when omitted");
  s_oc->add_option("--n", n, "Patients per trial");
  s_oc->add_option("--alphas", alphas, "Comma-separated constant alphas to compare");
  auto* s_cons = sim->add_subcommand("consistency", "Convergence of the recommendation to the true MTD");
  s_cons->add_option("--beta0", beta0, "True slope of the one-parameter model")->required();
  s_cons->add_option("--n-list", cons_list)->default_val("10,25,50,100,200");
  auto* s_size = sim->add_subcommand("samplesize", "Posterior spread by sample size");
  s_size->add_option("--scenarios", scenarios_path, "Scenario file; the first scenario is used");
  s_size->add_option("--n-list", size_list)->default_val("5,10,20,40");
  s_size->add_option("--margin", margin, "Target average posterior sd");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--data-dir", data_dir)->envname("EWOC_DATA_DIR");
  serve_cmd->add_option("--port", port)->envname("EWOC_PORT");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate_cmd) {
      try {
        const auto cfg = load_config(config_path);
        const auto [lo, hi] = dose_bounds(cfg.model);
        print({{"valid", true},
               {"name", cfg.name},
               {"prior", to_string(cfg.model.prior.kind)},
               {"dose_range", {lo, hi}},
               {"first_dose", cfg.dose_levels.empty() ? lo : cfg.dose_levels.front()},
               {"resolution", effective_resolution(cfg.model)}});
        return 0;
      } catch (const InvalidConfig& e) {
        print({{"valid", false}, {"errors", field_errors_to_json(e.errors())}});
        return 1;
      }
    }

    if (*trial) {
      ApiService api(data_dir);
      const auto w = list_of(covariates);
      if (*t_new) {
        json body = {{"config", config_to_json(load_config(config_path))}};
        body["covariates"] = w;
        print(api.create_trial(body));
      } else if (*t_next) {
        if (dry_run) {
          print(api.recommendation(id, w));
        } else {
          json body = {{"covariates", w}};
          if (expected_version) body["expected_version"] = *expected_version;
          print(api.enroll(id, body));
        }
      } else if (*t_outcome) {
        json body = {{"dlt", dlt}};
        if (expected_version) body["expected_version"] = *expected_version;
        print(api.post_outcome(id, patient, body));
      } else if (*t_report) {
        json report = api.get_trial(id);
        report["posterior"] = api.posterior(id, w);
        const auto rec = api.store().get(id);
        if (rec->state->resolved_count > 0 && rec->state->halt_reason != kFirstPatientDlt) {
          PosteriorCache cache;
          report["estimate"] = estimate_to_json(final_mtd(*rec->state, cache, std::nullopt, w));
        }
        print(report);
      }
      return 0;
    }

    if (*sim) {
      const TrialConfig cfg = load_config(config_path);
      if (*s_oc) {
        const auto scenarios = scenarios_path.empty() ? default_scenarios(cfg.model.constants) : load_scenarios(scenarios_path);
        std::vector<TrialConfig> configs;
        if (alphas.empty()) {
          configs.push_back(cfg);
        } else {
          for (double a : list_of(alphas)) {
            TrialConfig c = cfg;
            c.alpha = {a, 0.0, a, 0};
            configs.push_back(c);
          }
        }
        std::string csv = oc_csv_header(n) + "\n";
        json mirror = json::array();
        for (const auto& s : scenarios) {
          for (const auto& c : configs) {
            const auto oc = operating_chars(s, c, n, reps, seed);
            csv += oc_csv_row(oc) + "\n";
            mirror.push_back(oc_to_json(oc));
            std::cerr << s.id << " alpha=" << c.alpha.start << " overdose=" << oc.overdose_fraction
                      << " dlt=" << oc.dlt_fraction << '\n';
          }
        }
        emit(out_path, csv);
        if (!out_path.empty() && out_path != "-") emit(out_path + ".json", mirror.dump(2) + "\n");
      } else if (*s_cons) {
        const auto rows = consistency_check(beta0, cfg, int_list(cons_list), reps, seed);
        json j = json::array();
        for (const auto& r : rows)
          j.push_back({{"n", r.n}, {"median_abs_error", r.median_abs_error}, {"q25", r.q25}, {"q75", r.q75}});
        emit(out_path, j.dump(2) + "\n");
      } else if (*s_size) {
        const auto scenario =
            scenarios_path.empty() ? default_scenarios(cfg.model.constants).front() : load_scenarios(scenarios_path).front();
        const auto table = sample_size_table(cfg, scenario, int_list(size_list), reps, seed, margin);
        json rows = json::array();
        for (const auto& r : table.rows)
          rows.push_back({{"n", r.n}, {"avg_sd", r.avg_sd}, {"avg_hpd90", r.avg_hpd90}, {"avg_hpd95", r.avg_hpd95}});
        json j = {{"scenario", scenario.id}, {"prior_sd", table.prior_sd}, {"rows", rows}};
        j["smallest_n"] = table.smallest_n ? json(*table.smallest_n) : json("not reached");
        emit(out_path, j.dump(2) + "\n");
      }
      return 0;
    }

    if (*serve_cmd) {
      ServeOptions opts;
      opts.data_dir = data_dir;
      opts.port = port;
      if (const char* tok = std::getenv("EWOC_TOKEN"); tok && *tok) opts.token = tok;
      return serve(opts);
    }
  } catch (const ApiError& e) {
    std::cerr << e.envelope().dump(2) << '\n';
    return 2;
  } catch (const InvalidConfig& e) {
    std::cerr << "invalid configuration:\n" << field_errors_to_json(e.errors()).dump(2) << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
