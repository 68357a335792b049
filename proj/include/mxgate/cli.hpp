// Copyright 2026 The mxgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/evalkit.hpp"
#include "mxgate/patchset.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/png_io.hpp"
#include "mxgate/pseudo_he.hpp"
#include "mxgate/rulelang.hpp"
#include "mxgate/service.hpp"
#include "mxgate/slide_io.hpp"
#include "mxgate/synthgen.hpp"
#include "mxgate/table1.hpp"
#include "mxgate/tiff_io.hpp"
#include "mxgate/trainkit.hpp"

namespace mxgate {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitUsage = 2;

namespace cli {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct RulesArgs {
  std::string path;
  bool merge_10_15 = false;

  void add(CLI::App* app) {
    app->add_option("--rules", path, "Gating program (default: built-in canonical cascade)");
    app->add_flag("--merge-step-10-15", merge_10_15, "Use step 15's expression for exclusion step 10");
  }

  std::pair<RuleProgram, std::string> load() const {
    std::string text = path.empty() ? std::string(kTable1Source) : read_text_file(path);
    RuleProgram p = parse_rule_program(text);
    if (merge_10_15) {
      p = merge_exclusion_steps(p, 10, 15);
      text = pretty_print(p);
    }
    return {std::move(p), std::move(text)};
  }
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_text_file(path, text);
}

inline ThresholdSet pick_thresholds(const std::vector<std::string>& paths, std::size_t i) {
  if (paths.empty()) throw InvalidArgument("--thresholds is required");
  if (paths.size() != 1 && i >= paths.size()) throw InvalidArgument("give one --thresholds per --manifest, or a single one");
  return load_thresholds(paths.size() == 1 ? paths[0] : paths[i]);
}

inline std::atomic<Service*>& active_service() {
  static std::atomic<Service*> s{nullptr};
  return s;
}

inline void on_signal(int) {
  if (auto* s = active_service().load()) s->stop();
}

}  // namespace cli

/// Runs one pipeline stage. Returns 0 on success, 1 for data errors and 2
/// for usage errors.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Nucleus phenotyping from multiplexed immunofluorescence: gating, pseudo-H&E, patches, training, evaluation"};
  app.name("mxgate");
  app.require_subcommand(1);
  app.fallthrough();
  cli::Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = hardware concurrency)")->capture_default_str();

  int status = kExitOk;

  // ingest ------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Load a slide and write per-nucleus mean intensities");
  std::string ingest_manifest, ingest_out, ingest_suggest, ingest_thr_out;
  int band_rows = 0;
  ingest->add_option("--manifest", ingest_manifest, "Slide manifest JSON")->required();
  ingest->add_option("--out", ingest_out, "Feature CSV to write")->required();
  ingest->add_option("--band-rows", band_rows, "Stream the TIFFs in bands of this many rows");
  ingest->add_option("--suggest", ingest_suggest, "Threshold suggestion: otsu or pNN (percentile)");
  ingest->add_option("--thresholds-out", ingest_thr_out, "Where to write suggested thresholds");
  ingest->callback([&] {
    const auto m = load_manifest(ingest_manifest);
    const auto table = band_rows > 0 ? compute_nucleus_features_streaming(m, band_rows, g.threads)
                                     : compute_nucleus_features(load_slide(m), g.threads);
    std::ostringstream os;
    write_nucleus_csv(os, table);
    cli::write_file(ingest_out, os.str());
    out << "nuclei: " << table.records.size() << '\n';
    if (!ingest_suggest.empty()) {
      ThresholdMethod method;
      if (ingest_suggest == "otsu") method = ThresholdMethod::otsu();
      else if (ingest_suggest.size() > 1 && ingest_suggest[0] == 'p')
        method = ThresholdMethod::at_percentile(parse_double(ingest_suggest.substr(1), "--suggest"));
      else throw InvalidArgument("--suggest must be otsu or pNN");
      const auto t = suggest_thresholds(table, method, m.slide_id);
      if (ingest_thr_out.empty()) out << to_json(t).dump(2) << '\n';
      else save_thresholds(ingest_thr_out, t);
    }
  });

  // label -------------------------------------------------------------------
  auto* label = app.add_subcommand("label", "Gate nuclei and apply the rule cascade");
  std::string label_manifest, label_features, label_thresholds, label_out;
  bool label_counts = false;
  cli::RulesArgs label_rules;
  auto* lm = label->add_option("--manifest", label_manifest, "Slide manifest JSON");
  label->add_option("--features", label_features, "Feature CSV from ingest")->excludes(lm);
  label->add_option("--thresholds", label_thresholds, "Threshold JSON")->required();
  label->add_option("--out", label_out, "Label CSV to write")->required();
  label->add_flag("--counts", label_counts, "Print class counts");
  label_rules.add(label);
  label->callback([&] {
    if (label_manifest.empty() && label_features.empty()) throw CLI::RequiredError("--manifest or --features");
    const auto [program, text] = label_rules.load();
    const NucleusTable table = !label_features.empty()
                                   ? read_nucleus_csv(read_text_file(label_features), label_features)
                                   : compute_nucleus_features(load_slide(load_manifest(label_manifest)), g.threads);
    const auto labels = label_nuclei(table, load_thresholds(label_thresholds), program, g.threads);
    std::ostringstream os;
    write_label_csv(os, labels);
    cli::write_file(label_out, os.str());
    if (label_counts) {
      const auto c = count_classes(labels);
      for (std::size_t i = 0; i < labels.classes.size(); ++i) out << labels.classes[i] << ": " << c.per_class[i] << '\n';
      out << "excluded: " << c.excluded << "\nunassigned: " << c.unassigned << '\n';
    }
  });

  // enumerate ---------------------------------------------------------------
  auto* enumerate = app.add_subcommand("enumerate", "Evaluate every gate vector and report the rule-space partition");
  cli::RulesArgs enum_rules;
  std::string enum_domain = "referenced";
  enum_rules.add(enumerate);
  enumerate->add_option("--domain", enum_domain, "referenced, panel, or a comma-separated marker list")->capture_default_str();
  enumerate->callback([&] {
    const auto [program, text] = enum_rules.load();
    std::uint64_t mask = program.referenced_mask();
    if (enum_domain == "panel") {
      mask = program.panel_mask();
    } else if (enum_domain != "referenced") {
      mask = 0;
      for (const auto& name : split_csv_line(enum_domain)) {
        const auto idx = program.marker_index(name);
        if (!idx) throw InvalidArgument("unknown marker " + name + " in --domain");
        mask |= std::uint64_t{1} << *idx;
      }
    }
    const auto rep = enumerate_rule_space(program, mask);
    print_report(out, rep, program);
    bool witnesses = true;
    for (auto c : rep.assigned_by_class) witnesses = witnesses && c > 0;
    const bool ok = rep.sound() && witnesses && rep.outcome_sum() == rep.total_vectors;
    out << (ok ? "rule space: sound\n" : "rule space: VIOLATIONS\n");
    if (!ok) status = kExitDataError;
  });

  // render-he ---------------------------------------------------------------
  auto* render = app.add_subcommand("render-he", "Render a pseudo-H&E image from the MxIF channels");
  std::string render_manifest, render_out, render_spec;
  render->add_option("--manifest", render_manifest, "Slide manifest JSON")->required();
  render->add_option("--out", render_out, "Output .png or .tif")->required();
  render->add_option("--spec", render_spec, "Stain mix JSON");
  render->callback([&] {
    const auto slide = load_slide(load_manifest(render_manifest));
    auto spec = StainMixSpec::defaults_for(slide.markers);
    if (!render_spec.empty()) spec = stain_spec_from_json(nlohmann::json::parse(read_text_file(render_spec)));
    const auto img = render_pseudo_he(slide, spec, g.threads);
    const std::filesystem::path p(render_out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const auto ext = p.extension().string();
    if (ext == ".tif" || ext == ".tiff") write_tiff(p, img);
    else write_png(p, img);
  });

  // folds -------------------------------------------------------------------
  auto* folds = app.add_subcommand("folds", "Make a patient-level stratified fold plan");
  std::vector<std::string> fold_manifests;
  std::string folds_out;
  FoldSizes sizes;
  int fold_attempts = 20000;
  folds->add_option("--manifest", fold_manifests, "Slide manifests (repeatable)")->required();
  folds->add_option("--out", folds_out, "Fold plan JSON")->required();
  folds->add_option("--k", sizes.k)->capture_default_str();
  folds->add_option("--train", sizes.train)->capture_default_str();
  folds->add_option("--val", sizes.val)->capture_default_str();
  folds->add_option("--test", sizes.test)->capture_default_str();
  folds->add_option("--max-attempts", fold_attempts)->capture_default_str();
  folds->callback([&] {
    std::vector<SlideManifest> ms;
    for (const auto& p : fold_manifests) ms.push_back(load_manifest(p));
    const auto patients = patients_from_manifests(ms);
    const auto plan = make_folds(patients, g.seed, sizes, fold_attempts);
    cli::write_file(folds_out, to_json(plan).dump(2) + "\n");
    out << "patients: " << patients.size() << ", folds: " << plan.folds.size() << '\n';
  });

  // patches -----------------------------------------------------------------
  auto* patches = app.add_subcommand("patches", "Label slides, render pseudo-H&E and write the patch dataset");
  std::vector<std::string> patch_manifests, patch_thresholds;
  std::string patch_folds, patch_out;
  cli::RulesArgs patch_rules;
  patches->add_option("--manifest", patch_manifests, "Slide manifests (repeatable)")->required();
  patches->add_option("--thresholds", patch_thresholds, "Threshold JSON per manifest, or one for all")->required();
  patches->add_option("--folds", patch_folds, "Fold plan JSON (default: made from the manifests with --seed)");
  patches->add_option("--out", patch_out, "Dataset manifest JSON; records go next to it")->required();
  patch_rules.add(patches);
  patches->callback([&] {
    const auto [program, text] = patch_rules.load();
    std::vector<SlideManifest> ms;
    for (const auto& p : patch_manifests) ms.push_back(load_manifest(p));
    const FoldPlan plan = patch_folds.empty() ? make_folds(patients_from_manifests(ms), g.seed)
                                              : fold_plan_from_json(nlohmann::json::parse(read_text_file(patch_folds)));
    std::vector<NucleusTable> features(ms.size());
    std::vector<LabelTable> labels(ms.size());
    std::vector<RgbImage> images(ms.size());
    std::vector<SlideInput> inputs;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const auto slide = load_slide(ms[i]);
      features[i] = compute_nucleus_features(slide, g.threads);
      labels[i] = label_nuclei(features[i], cli::pick_thresholds(patch_thresholds, i), program, g.threads);
      images[i] = render_pseudo_he(slide, StainMixSpec::defaults_for(slide.markers), g.threads);
    }
    for (std::size_t i = 0; i < ms.size(); ++i) inputs.push_back({ms[i], &features[i], &labels[i], &images[i]});
    auto ds = build_dataset(inputs, plan, g.threads);
    const std::filesystem::path p(patch_out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    save_dataset(p, ds);
    out << "records: " << ds.manifest.record_count << '\n';
    for (std::size_t c = 0; c < ds.manifest.classes.size(); ++c)
      out << ds.manifest.classes[c] << ": " << ds.manifest.class_counts[c] << '\n';
  });

  // train -------------------------------------------------------------------
  auto* trainc = app.add_subcommand("train", "Train the reference classifier on one fold");
  std::string train_dataset, train_out, train_config, train_curves;
  std::size_t train_fold = 0;
  TrainConfig cfg;
  trainc->add_option("--dataset", train_dataset, "Dataset manifest JSON")->required();
  trainc->add_option("--fold", train_fold)->capture_default_str();
  trainc->add_option("--out", train_out, "Model file to write")->required();
  trainc->add_option("--config", train_config, "TrainConfig JSON (flags override it)");
  trainc->add_option("--curves", train_curves, "Write training/validation curves CSV");
  auto* o_steps = trainc->add_option("--steps", cfg.steps)->capture_default_str();
  auto* o_batch = trainc->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  auto* o_lr = trainc->add_option("--peak-lr", cfg.peak_lr)->capture_default_str();
  auto* o_hidden = trainc->add_option("--hidden", cfg.hidden, "Hidden layer width (0 = linear)")->capture_default_str();
  auto* o_val = trainc->add_option("--validate-every", cfg.validate_every)->capture_default_str();
  trainc->callback([&] {
    TrainConfig c = cfg;
    if (!train_config.empty()) {
      c = train_config_from_json(nlohmann::json::parse(read_text_file(train_config)));
      if (o_steps->count()) c.steps = cfg.steps;
      if (o_batch->count()) c.batch_size = cfg.batch_size;
      if (o_lr->count()) c.peak_lr = cfg.peak_lr;
      if (o_hidden->count()) c.hidden = cfg.hidden;
      if (o_val->count()) c.validate_every = cfg.validate_every;
    }
    c.seed = g.seed;
    c.threads = g.threads;
    const auto ds = load_dataset(train_dataset);
    const auto t = train(ds, train_fold, c);
    const std::filesystem::path p(train_out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    save_model(p, t);
    if (!train_curves.empty()) {
      std::ostringstream os;
      os << "step,train_loss,val_loss,val_accuracy\n";
      std::size_t v = 0;
      for (std::size_t s = 0; s < t.train_loss.size(); ++s) {
        os << s + 1 << ',' << format_double(t.train_loss[s]) << ',';
        if (v < t.validation.size() && t.validation[v].step == static_cast<int>(s + 1)) {
          os << format_double(t.validation[v].loss) << ',' << format_double(t.validation[v].accuracy);
          ++v;
        } else {
          os << ',';
        }
        os << '\n';
      }
      cli::write_file(train_curves, os.str());
    }
    out << "best step: " << t.best_step << ", validation loss: " << format_double(t.best_val_loss)
        << ", validation accuracy: " << format_double(t.best_val_accuracy) << '\n';
  });

  // predict -----------------------------------------------------------------
  auto* predictc = app.add_subcommand("predict", "Predict classes for one fold's records");
  std::string pred_dataset, pred_model, pred_out, pred_role = "test";
  std::size_t pred_fold = 0;
  predictc->add_option("--dataset", pred_dataset, "Dataset manifest JSON")->required();
  predictc->add_option("--model", pred_model, "Model file")->required();
  predictc->add_option("--fold", pred_fold)->capture_default_str();
  predictc->add_option("--role", pred_role, "train, val, test or all")->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  predictc->add_option("--out", pred_out, "Predictions CSV")->required();
  predictc->callback([&] {
    const auto ds = load_dataset(pred_dataset);
    const auto model = load_model(pred_model);
    std::vector<std::size_t> idx;
    if (pred_role == "all") {
      idx.resize(ds.records.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    } else {
      const Role r = pred_role == "train" ? Role::Train : pred_role == "val" ? Role::Val : Role::Test;
      idx = records_with_role(ds, pred_fold, r);
    }
    const auto preds = predict(model.model, ds, idx, g.threads);
    std::ostringstream os;
    write_predictions_csv(os, ds, idx, preds);
    cli::write_file(pred_out, os.str());
    out << "predicted: " << preds.size() << '\n';
  });

  // eval --------------------------------------------------------------------
  auto* evalc = app.add_subcommand("eval", "Per-class PPV/NPV/prevalence/accuracy across folds");
  std::vector<std::string> eval_preds;
  std::string eval_out, eval_dataset;
  double cutoff = 0.3;
  cli::RulesArgs eval_rules;
  evalc->add_option("--predictions", eval_preds, "Predictions CSV, one per fold (repeatable)")->required();
  evalc->add_option("--out", eval_out, "Report path stem (writes .csv and .json)")->required();
  evalc->add_option("--dataset", eval_dataset, "Take class names from this dataset manifest");
  evalc->add_option("--ppv-cutoff", cutoff)->capture_default_str();
  eval_rules.add(evalc);
  evalc->callback([&] {
    std::vector<std::string> classes;
    if (!eval_dataset.empty()) {
      classes = dataset_manifest_from_json(nlohmann::json::parse(read_text_file(eval_dataset))).classes;
    } else {
      classes = eval_rules.load().first.classes();
    }
    std::vector<ClassMetrics> per_fold;
    for (const auto& p : eval_preds) {
      ConfusionMatrix cm(classes.size());
      for (const auto& r : read_predictions_csv(read_text_file(p), p)) cm.add(r.true_label, r.pred_label);
      per_fold.push_back(class_metrics(cm));
    }
    const auto summary = aggregate_folds(per_fold, classes);
    const std::filesystem::path stem(eval_out);
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    emit_report(summary, stem, cutoff);
    out << report_csv(summary, cutoff);
  });

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate synthetic slides with planted truth");
  std::string synth_out;
  SynthSpec sspec;
  bool synth_cohort = false;
  double sigma = -1;
  CohortSpec cspec;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--nuclei", sspec.nuclei)->capture_default_str();
  synth->add_option("--width", sspec.width)->capture_default_str();
  synth->add_option("--height", sspec.height)->capture_default_str();
  synth->add_option("--sigma", sigma, "Intensity noise for both distributions (default 10)");
  synth->add_option("--slide-id", sspec.slide_id)->capture_default_str();
  synth->add_flag("--cohort", synth_cohort, "Generate the 20-patient cohort instead of one slide");
  synth->add_option("--patients", cspec.patients)->capture_default_str();
  synth->callback([&] {
    if (sigma >= 0) sspec.positive_sd = sspec.negative_sd = sigma;
    const std::filesystem::path dir(synth_out);
    auto emit = [&](SyntheticSlide& s, const std::filesystem::path& d) {
      const auto m = write_synthetic_slide(d, s);
      save_thresholds(d / "thresholds.json", s.planted_thresholds());
      std::ostringstream os;
      write_label_csv(os, s.truth_labels());
      write_text_file(d / "truth_labels.csv", os.str());
      return m;
    };
    if (!synth_cohort) {
      sspec.seed = g.seed;
      auto s = generate_synthetic_slide(sspec);
      out << emit(s, dir).string() << '\n';
      return;
    }
    cspec.slide = sspec;
    cspec.seed = g.seed;
    cspec.two_slide_patients = std::min(cspec.two_slide_patients, cspec.patients);
    auto cohort = generate_synthetic_cohort(cspec, g.threads);
    nlohmann::json index = nlohmann::json::array();
    for (auto& s : cohort.slides) {
      const auto m = emit(s, dir / s.manifest.slide_id);
      index.push_back(std::filesystem::relative(m, dir).string());
      out << m.string() << '\n';
    }
    write_text_file(dir / "cohort.json", index.dump(2) + "\n");
  });

  // serve -------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "HTTP service for threshold tuning");
  std::vector<std::string> serve_manifests, serve_thresholds, serve_predictions;
  std::string host = "127.0.0.1", port_file;
  int port = 8080;
  cli::RulesArgs serve_rules;
  serve->add_option("--manifest", serve_manifests, "Slide manifests (repeatable)")->required();
  serve->add_option("--thresholds", serve_thresholds,
                    "Threshold JSON per manifest; updated in place on every accepted PUT");
  serve->add_option("--predictions", serve_predictions, "Predictions CSV(s) for the predictions overlay");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
  serve->add_option("--port-file", port_file, "Write the bound port here once listening");
  serve_rules.add(serve);
  serve->callback([&] {
    if (!serve_thresholds.empty() && serve_thresholds.size() != serve_manifests.size())
      throw InvalidArgument("give one --thresholds per --manifest");
    auto [program, text] = serve_rules.load();
    SessionState state(std::move(program), std::move(text), g.threads);
    std::map<std::string, std::map<std::uint32_t, int>> preds;
    for (const auto& p : serve_predictions)
      for (const auto& r : read_predictions_csv(read_text_file(p), p)) preds[r.slide_id][r.nucleus_id] = r.pred_label;
    for (std::size_t i = 0; i < serve_manifests.size(); ++i) {
      auto d = load_slide_data(serve_manifests[i], serve_thresholds.empty() ? std::filesystem::path{} : std::filesystem::path(serve_thresholds[i]), g.threads);
      if (auto it = preds.find(d.manifest.slide_id); it != preds.end()) d.predictions = it->second;
      state.add_slide(std::move(d));
    }
    Service service(state);
    const int bound = service.bind(host, port);
    cli::active_service().store(&service);
    std::signal(SIGINT, cli::on_signal);
    std::signal(SIGTERM, cli::on_signal);
    if (!port_file.empty()) write_text_file(port_file, std::to_string(bound) + "\n");
    out << "listening on http://" << host << ':' << bound << std::endl;
    service.listen();
    cli::active_service().store(nullptr);
  });

  // rules-check -------------------------------------------------------------
  auto* check = app.add_subcommand("rules-check", "Parse, validate and compile a gating program");
  cli::RulesArgs check_rules;
  bool check_print = false;
  check_rules.add(check);
  check->add_flag("--print", check_print, "Print the normalized program");
  check->callback([&] {
    const auto [program, text] = check_rules.load();
    const auto compiled = compile_program(program);
    out << "ok: " << program.steps().size() << " steps, " << program.classes().size() << " classes, "
        << program.referenced_markers().size() << " gating markers, " << compiled.tape().size() << " instructions\n";
    if (check_print) out << pretty_print(program);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << e.kind() << "]: " << e.what() << '\n';
    return kExitDataError;
  } catch (const nlohmann::json::exception& e) {
    err << "error [DecodeError]: " << e.what() << '\n';
    return kExitDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }
  return status;
}

inline int cli_dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"mxgate"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mxgate
