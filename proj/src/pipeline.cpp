// src/pipeline.cpp

// Copyright 2026  The stylekit Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "stylekit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "stylekit/ioutil.hpp"
#include "stylekit/manifest.hpp"
#include "stylekit/styles.hpp"

namespace stylekit {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw Error("config section '" + section + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      throw Error("unknown config key '" + key + "' in section '" + section +
                  "'");
    }
  }
}

// Everything a cached feature file depends on; changing any of it
// invalidates the cache.
std::string extract_config_key(const PipelineConfig& cfg) {
  std::string s = "v1|sr=" + std::to_string(cfg.sample_rate);
  s += "|n_fft=" + std::to_string(cfg.stft.n_fft);
  s += "|hop=" + std::to_string(cfg.stft.hop);
  s += "|win=" + std::to_string(cfg.stft.win_length);
  s += "|n_mels=" + std::to_string(cfg.mel.n_mels);
  s += "|fmin=" + fmt_double(cfg.mel.fmin);
  s += "|fmax=" + fmt_double(cfg.mel.fmax);
  s += "|variants=" + std::to_string(cfg.n_variants);
  s += "|p_fmin=" + fmt_double(cfg.pitch.fmin);
  s += "|p_fmax=" + fmt_double(cfg.pitch.fmax);
  s += "|p_frame=" + std::to_string(cfg.pitch.frame_length);
  s += "|p_hop=" + std::to_string(cfg.pitch.hop);
  return hex64(fnv1a64(s));
}

std::string variant_path(const fs::path& cache, const std::string& stem,
                         Index k) {
  return (cache / (stem + ".var" + std::to_string(k) + ".styf")).string();
}

ToySpec toy_spec_for(const PipelineConfig& cfg) {
  ToySpec spec = default_toy_spec();
  spec.utterances_per_pair = cfg.toygen.utterances_per_pair;
  spec.duration = cfg.toygen.duration;
  spec.sample_rate = cfg.sample_rate;
  spec.seed = cfg.seed;
  return spec;
}

// The split key mirrors the stratification unit: one (speaker, style) cell.
std::vector<std::string> split_keys(const std::vector<std::string>& speakers,
                                    const std::vector<std::string>& styles) {
  std::vector<std::string> keys(speakers.size());
  for (std::size_t i = 0; i < speakers.size(); ++i)
    keys[i] = speakers[i] + "\t" + styles[i];
  return keys;
}

Matf center_slice(const MelSpectrogram& m, Index slice_frames) {
  const Index n = m.frames.rows();
  if (n == slice_frames) return m.frames;
  if (n > slice_frames)
    return m.frames.middleRows((n - slice_frames) / 2, slice_frames);
  Matf out(slice_frames, m.frames.cols());
  for (Index i = 0; i < slice_frames; ++i) out.row(i) = m.frames.row(i % n);
  return out;
}

void run_parallel(Index n, int jobs, const std::function<void(Index)>& fn) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    threads.emplace_back([&, t] {
      for (Index i = t; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace

Arm parse_arm(const std::string& name) {
  if (name == "synth_none") return Arm::kSynthNone;
  if (name == "synth_both") return Arm::kSynthBoth;
  throw Error("unknown arm '" + name + "' (expected synth_none or synth_both)");
}

std::string arm_name(Arm arm) {
  return arm == Arm::kSynthNone ? "synth_none" : "synth_both";
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("invalid config JSON: ") + e.what());
  }
  PipelineConfig cfg;
  check_keys(j, "(top level)",
             {"seed", "sample_rate", "arm", "stft", "mel", "pitch", "encoder",
              "train", "split", "eval", "toygen"});
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
    if (j.contains("arm")) cfg.arm = parse_arm(j.at("arm").get<std::string>());
    if (j.contains("stft")) {
      const json& s = j.at("stft");
      check_keys(s, "stft", {"n_fft", "hop", "win_length"});
      cfg.stft.n_fft = s.value("n_fft", cfg.stft.n_fft);
      cfg.stft.hop = s.value("hop", cfg.stft.hop);
      cfg.stft.win_length = s.value("win_length", cfg.stft.win_length);
    }
    if (j.contains("mel")) {
      const json& s = j.at("mel");
      check_keys(s, "mel", {"n_mels", "fmin", "fmax"});
      cfg.mel.n_mels = s.value("n_mels", cfg.mel.n_mels);
      cfg.mel.fmin = s.value("fmin", cfg.mel.fmin);
      cfg.mel.fmax = s.value("fmax", cfg.mel.fmax);
    }
    if (j.contains("pitch")) {
      const json& s = j.at("pitch");
      check_keys(s, "pitch", {"fmin", "fmax", "frame_length", "hop"});
      cfg.pitch.fmin = s.value("fmin", cfg.pitch.fmin);
      cfg.pitch.fmax = s.value("fmax", cfg.pitch.fmax);
      cfg.pitch.frame_length = s.value("frame_length", cfg.pitch.frame_length);
      cfg.pitch.hop = s.value("hop", cfg.pitch.hop);
    }
    if (j.contains("encoder")) {
      const json& s = j.at("encoder");
      check_keys(s, "encoder", {"conv_channels", "hidden", "embedding_dim"});
      if (s.contains("conv_channels"))
        cfg.encoder.conv_channels =
            s.at("conv_channels").get<std::vector<int>>();
      cfg.encoder.hidden = s.value("hidden", cfg.encoder.hidden);
      cfg.encoder.embedding_dim =
          s.value("embedding_dim", cfg.encoder.embedding_dim);
    }
    if (j.contains("train")) {
      const json& s = j.at("train");
      check_keys(s, "train",
                 {"styles_per_batch", "utts_per_style", "slice_duration",
                  "perturb_prob", "steps", "lr", "beta1", "beta2", "eps",
                  "log_interval", "checkpoint_interval", "variants"});
      cfg.train.styles_per_batch =
          s.value("styles_per_batch", cfg.train.styles_per_batch);
      cfg.train.utts_per_style =
          s.value("utts_per_style", cfg.train.utts_per_style);
      cfg.train.slice_duration =
          s.value("slice_duration", cfg.train.slice_duration);
      cfg.train.perturb_prob = s.value("perturb_prob", cfg.train.perturb_prob);
      cfg.train.steps = s.value("steps", cfg.train.steps);
      cfg.train.lr = s.value("lr", cfg.train.lr);
      cfg.train.beta1 = s.value("beta1", cfg.train.beta1);
      cfg.train.beta2 = s.value("beta2", cfg.train.beta2);
      cfg.train.eps = s.value("eps", cfg.train.eps);
      cfg.train.log_interval = s.value("log_interval", cfg.train.log_interval);
      cfg.train.checkpoint_interval =
          s.value("checkpoint_interval", cfg.train.checkpoint_interval);
      cfg.n_variants = s.value("variants", cfg.n_variants);
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      check_keys(s, "split", {"validation_fraction"});
      cfg.split.validation_fraction =
          s.value("validation_fraction", cfg.split.validation_fraction);
    }
    if (j.contains("eval")) {
      const json& s = j.at("eval");
      check_keys(s, "eval",
                 {"neutral_label", "include_synthetic_in_centroids",
                  "probe_holdout"});
      cfg.eval.neutral_label =
          s.value("neutral_label", cfg.eval.neutral_label);
      cfg.eval.include_synthetic_in_centroids =
          s.value("include_synthetic_in_centroids",
                  cfg.eval.include_synthetic_in_centroids);
      cfg.eval.probe_holdout =
          s.value("probe_holdout", cfg.eval.probe_holdout);
    }
    if (j.contains("toygen")) {
      const json& s = j.at("toygen");
      check_keys(s, "toygen", {"utterances_per_pair", "duration"});
      cfg.toygen.utterances_per_pair =
          s.value("utterances_per_pair", cfg.toygen.utterances_per_pair);
      cfg.toygen.duration = s.value("duration", cfg.toygen.duration);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("invalid config value: ") + e.what());
  }

  if (cfg.sample_rate <= 0) throw Error("config: sample_rate must be > 0");
  if (cfg.mel.n_mels < 1) throw Error("config: mel.n_mels must be >= 1");
  if (cfg.mel.fmin < 0.0 || cfg.mel.fmax <= cfg.mel.fmin)
    throw Error("config: need 0 <= mel.fmin < mel.fmax");
  if (cfg.mel.fmax > cfg.sample_rate / 2.0)
    throw Error("config: mel.fmax exceeds the Nyquist frequency");
  if (cfg.split.validation_fraction < 0.0 ||
      cfg.split.validation_fraction >= 1.0)
    throw Error("config: split.validation_fraction must be in [0, 1)");
  if (cfg.eval.probe_holdout <= 0.0 || cfg.eval.probe_holdout >= 1.0)
    throw Error("config: eval.probe_holdout must be in (0, 1)");
  if (cfg.n_variants < 0) throw Error("config: train.variants must be >= 0");
  if (cfg.train.perturb_prob > 0.0 && cfg.n_variants == 0)
    throw Error("config: perturb_prob > 0 needs train.variants >= 1");
  if (cfg.toygen.utterances_per_pair <= 0)
    throw Error("config: toygen.utterances_per_pair must be > 0");
  if (cfg.toygen.duration <= 0.0)
    throw Error("config: toygen.duration must be > 0");

  cfg.encoder.n_mels = cfg.mel.n_mels;
  cfg.train.seed = cfg.seed;
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  if (path.empty()) return parse_pipeline_config("{}");
  const auto bytes = read_file_bytes(path);
  return parse_pipeline_config(std::string(bytes.begin(), bytes.end()));
}

std::string serialize_pipeline_config(const PipelineConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["sample_rate"] = cfg.sample_rate;
  j["arm"] = arm_name(cfg.arm);
  j["stft"] = {{"n_fft", cfg.stft.n_fft},
               {"hop", cfg.stft.hop},
               {"win_length", cfg.stft.win_length}};
  j["mel"] = {{"n_mels", cfg.mel.n_mels},
              {"fmin", cfg.mel.fmin},
              {"fmax", cfg.mel.fmax}};
  j["pitch"] = {{"fmin", cfg.pitch.fmin},
                {"fmax", cfg.pitch.fmax},
                {"frame_length", cfg.pitch.frame_length},
                {"hop", cfg.pitch.hop}};
  j["encoder"] = {{"conv_channels", cfg.encoder.conv_channels},
                  {"hidden", cfg.encoder.hidden},
                  {"embedding_dim", cfg.encoder.embedding_dim}};
  j["train"] = {{"styles_per_batch", cfg.train.styles_per_batch},
                {"utts_per_style", cfg.train.utts_per_style},
                {"slice_duration", cfg.train.slice_duration},
                {"perturb_prob", cfg.train.perturb_prob},
                {"steps", cfg.train.steps},
                {"lr", cfg.train.lr},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"eps", cfg.train.eps},
                {"log_interval", cfg.train.log_interval},
                {"checkpoint_interval", cfg.train.checkpoint_interval},
                {"variants", cfg.n_variants}};
  j["split"] = {{"validation_fraction", cfg.split.validation_fraction}};
  j["eval"] = {{"neutral_label", cfg.eval.neutral_label},
               {"include_synthetic_in_centroids",
                cfg.eval.include_synthetic_in_centroids},
               {"probe_holdout", cfg.eval.probe_holdout}};
  j["toygen"] = {{"utterances_per_pair", cfg.toygen.utterances_per_pair},
                 {"duration", cfg.toygen.duration}};
  return j.dump(2) + "\n";
}

std::string cache_stem(const std::string& audio_rel_path) {
  return fs::path(audio_rel_path).stem().string() + "." +
         hex64(fnv1a64(audio_rel_path)).substr(8);
}

std::string cmd_gen_toy(const PipelineConfig& cfg, const std::string& out_dir) {
  const ToySpec spec = toy_spec_for(cfg);
  const std::string manifest_path = generate_dataset(spec, out_dir);

  std::set<std::string> speakers, styles;
  std::printf("%-10s %-12s %6s  %s\n", "speaker", "style", "files",
              "synthetic");
  for (const auto& [speaker, style] : spec.pairs) {
    speakers.insert(speaker);
    styles.insert(style);
    std::printf("%-10s %-12s %6d  no\n", speaker.c_str(), style.c_str(),
                spec.utterances_per_pair);
  }
  for (const auto& conv : spec.conversions) {
    speakers.insert(conv.target_speaker);
    styles.insert(conv.style);
    std::printf("%-10s %-12s %6d  yes (from %s, quality %.2f)\n",
                conv.target_speaker.c_str(), conv.style.c_str(),
                spec.utterances_per_pair, conv.source_speaker.c_str(),
                conv.quality);
  }
  const std::size_t total =
      (spec.pairs.size() + spec.conversions.size()) *
      static_cast<std::size_t>(spec.utterances_per_pair);
  std::printf("total: %zu files, %zu speakers, %zu styles\n", total,
              speakers.size(), styles.size());
  std::printf("manifest: %s\n", manifest_path.c_str());
  return manifest_path;
}

namespace {

struct ExtractResult {
  bool ok = false;
  bool recomputed = false;
  std::string error;
  std::string wav_hash;
  F0Contour f0;
  EnergyContour energy;
};

void write_contours(const std::string& path, const F0Contour& f0,
                    const EnergyContour& energy) {
  ordered_json j;
  j["frame_period"] = f0.frame_period;
  j["f0_hz"] = std::vector<double>(f0.hz.data(), f0.hz.data() + f0.hz.size());
  j["energy_rms"] =
      std::vector<double>(energy.rms.data(), energy.rms.data() + energy.rms.size());
  atomic_write_file(path, j.dump());
}

void read_contours(const std::string& path, F0Contour* f0,
                   EnergyContour* energy) {
  const auto bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
    const double period = j.at("frame_period").get<double>();
    const auto hz = j.at("f0_hz").get<std::vector<double>>();
    const auto rms = j.at("energy_rms").get<std::vector<double>>();
    f0->frame_period = period;
    f0->hz = Eigen::Map<const Vecd>(hz.data(), static_cast<Index>(hz.size()));
    energy->frame_period = period;
    energy->rms =
        Eigen::Map<const Vecd>(rms.data(), static_cast<Index>(rms.size()));
  } catch (const json::exception& e) {
    throw Error("invalid contour cache " + path + ": " + e.what());
  }
}

}  // namespace

int cmd_extract(const PipelineConfig& cfg, const std::string& manifest_path,
                const std::string& cache_dir, int jobs) {
  const auto entries = load_manifest(manifest_path);
  if (entries.empty()) throw Error("manifest is empty: " + manifest_path);
  {
    std::set<std::string> seen;
    for (const auto& e : entries)
      if (!seen.insert(e.audio_path).second)
        throw Error("duplicate manifest audio_path: " + e.audio_path);
  }
  const fs::path cache(cache_dir);
  fs::create_directories(cache);
  const std::string config_key = extract_config_key(cfg);

  // Previous index; only trusted when the extraction config matches.
  std::map<std::string, std::string> known_hashes;
  const std::string index_path = (cache / "index.json").string();
  if (fs::exists(index_path)) {
    try {
      const auto bytes = read_file_bytes(index_path);
      const json idx = json::parse(bytes.begin(), bytes.end());
      if (idx.value("config", "") == config_key && idx.contains("files")) {
        for (const auto& [path, h] : idx.at("files").items())
          known_hashes[path] = h.get<std::string>();
      }
    } catch (const std::exception&) {
      // Unreadable index: recompute everything.
    }
  }

  const MelFilterbank fb = mel_filterbank(cfg.mel.n_mels, cfg.stft.n_fft,
                                          cfg.sample_rate, cfg.mel.fmin,
                                          cfg.mel.fmax);
  const Index n = static_cast<Index>(entries.size());
  std::vector<ExtractResult> results(n);

  run_parallel(n, jobs, [&](Index i) {
    ExtractResult& res = results[i];
    const ManifestEntry& entry = entries[static_cast<std::size_t>(i)];
    try {
      const std::string audio =
          resolve_audio_path(manifest_path, entry.audio_path);
      const auto wav_bytes = read_file_bytes(audio);
      res.wav_hash = hex64(fnv1a64(wav_bytes.data(), wav_bytes.size()));
      const std::string stem = cache_stem(entry.audio_path);
      const std::string mel_path = (cache / (stem + ".mel.styf")).string();
      const std::string contours_path =
          (cache / (stem + ".contours.json")).string();

      bool fresh = false;
      auto it = known_hashes.find(entry.audio_path);
      if (it != known_hashes.end() && it->second == res.wav_hash) {
        fresh = fs::exists(mel_path) && fs::exists(contours_path);
        for (Index k = 0; fresh && k < cfg.n_variants; ++k)
          fresh = fs::exists(variant_path(cache, stem, k));
      }
      if (fresh) {
        read_contours(contours_path, &res.f0, &res.energy);
        res.ok = true;
        return;
      }

      Waveform w = read_wav(audio);
      if (w.sample_rate != cfg.sample_rate) w = resample(w, cfg.sample_rate);
      save_mel(mel_spectrogram(w, cfg.stft, fb), mel_path);

      // Variant shift factors depend only on the file identity and the
      // extraction config, so one cache serves every training seed.
      Rng vrng(fnv1a64("variants|" + entry.audio_path) ^ fnv1a64(config_key));
      for (Index k = 0; k < cfg.n_variants; ++k) {
        const double rho = sample_shift_factor(vrng);
        const Waveform shifted = formant_shift(w, rho, cfg.stft);
        save_mel(mel_spectrogram(shifted, cfg.stft, fb),
                 variant_path(cache, stem, k));
      }

      res.f0 = estimate_f0(w, cfg.pitch);
      res.energy = frame_energy(w, cfg.pitch.frame_length, cfg.pitch.hop);
      write_contours(contours_path, res.f0, res.energy);
      res.ok = true;
      res.recomputed = true;
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  });

  // Refresh the index with every file that is now valid.
  json files = json::object();
  int recomputed = 0;
  std::vector<std::string> errors;
  for (Index i = 0; i < n; ++i) {
    const auto& res = results[i];
    if (res.ok) {
      files[entries[static_cast<std::size_t>(i)].audio_path] = res.wav_hash;
      recomputed += res.recomputed ? 1 : 0;
    } else {
      errors.push_back(entries[static_cast<std::size_t>(i)].audio_path + ": " +
                       res.error);
    }
  }
  json index = {{"config", config_key}, {"files", files}};
  atomic_write_file(index_path, index.dump(2) + "\n");

  if (errors.empty()) {
    // Speaker statistics over every manifest entry's contours.
    std::map<std::string, std::vector<F0Contour>> f0s;
    std::map<std::string, std::vector<EnergyContour>> energies;
    for (Index i = 0; i < n; ++i) {
      const auto& entry = entries[static_cast<std::size_t>(i)];
      f0s[entry.speaker_id].push_back(results[i].f0);
      energies[entry.speaker_id].push_back(results[i].energy);
    }
    std::map<std::string, SpeakerStats> stats;
    for (const auto& [speaker, contours] : f0s) {
      stats[speaker] =
          compute_speaker_stats(contours, energies.at(speaker), speaker);
    }
    save_speaker_stats(stats, (cache / "speaker_stats.json").string());
  } else {
    for (const auto& e : errors) std::cerr << "extract: " << e << "\n";
    throw Error("extract: " + std::to_string(errors.size()) + " of " +
                std::to_string(n) + " files failed");
  }
  return recomputed;
}

TrainDataset load_train_dataset(const PipelineConfig& cfg,
                                const std::string& manifest_path,
                                const std::string& cache_dir) {
  const auto entries = load_manifest(manifest_path);
  if (entries.empty()) throw Error("manifest is empty: " + manifest_path);
  std::vector<std::string> speakers, styles;
  for (const auto& e : entries) {
    speakers.push_back(e.speaker_id);
    styles.push_back(e.style);
  }
  // Validation rows are held out of training on the full manifest, before
  // the arm filter, so every arm sees the same ground-truth split.
  const std::vector<bool> held_out = stratified_holdout(
      split_keys(speakers, styles), cfg.split.validation_fraction, cfg.seed);

  const fs::path cache(cache_dir);
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (held_out[i]) continue;
    const ManifestEntry& entry = entries[i];
    if (cfg.arm == Arm::kSynthNone && entry.synthetic) continue;
    const std::string stem = cache_stem(entry.audio_path);
    const std::string mel_path = (cache / (stem + ".mel.styf")).string();
    if (!fs::exists(mel_path))
      throw Error("missing feature cache for " + entry.audio_path +
                  " (run extract first)");
    TrainItem item;
    item.base = load_mel(mel_path);
    for (Index k = 0; k < cfg.n_variants; ++k)
      item.variants.push_back(load_mel(variant_path(cache, stem, k)));
    item.style = entry.style;
    item.speaker_id = entry.speaker_id;
    item.synthetic = entry.synthetic;
    items.push_back(std::move(item));
  }
  if (items.empty())
    throw Error("no training items after the split and arm filter");
  return build_dataset(std::move(items));
}

void cmd_train(const PipelineConfig& cfg, const std::string& manifest_path,
               const std::string& cache_dir, const std::string& out_dir,
               const std::string& resume_path) {
  const TrainDataset ds = load_train_dataset(cfg, manifest_path, cache_dir);
  fs::create_directories(out_dir);
  const std::string ckpt_path = (fs::path(out_dir) / "encoder.stye").string();
  atomic_write_file((fs::path(out_dir) / "run_config.json").string(),
                    serialize_pipeline_config(cfg));

  const CheckpointCallback on_checkpoint = [&](const TrainState& state) {
    save_train_state(state, cfg.encoder, ckpt_path);
  };

  TrainResult result;
  if (resume_path.empty()) {
    result = train(ds, cfg.encoder, cfg.train, on_checkpoint);
  } else {
    auto [state, enc_cfg] = load_train_state(resume_path);
    check_config_match(cfg.encoder, enc_cfg);
    result = train_from(ds, cfg.encoder, cfg.train, std::move(state),
                        on_checkpoint);
  }
  save_history_csv(result.history, (fs::path(out_dir) / "loss.csv").string());
}

void cmd_embed(const PipelineConfig& cfg, const std::string& manifest_path,
               const std::string& cache_dir, const std::string& checkpoint,
               const std::string& out_path, int jobs) {
  const auto entries = load_manifest(manifest_path);
  if (entries.empty()) throw Error("manifest is empty: " + manifest_path);
  const EncoderCheckpoint ckpt = load_encoder(checkpoint);
  if (ckpt.config.n_mels != cfg.mel.n_mels)
    throw Error("checkpoint expects " + std::to_string(ckpt.config.n_mels) +
                " mel bands but the config extracts " +
                std::to_string(cfg.mel.n_mels));

  const fs::path cache(cache_dir);
  const Index count = static_cast<Index>(entries.size());

  // Evaluation embeds one deterministic center slice per utterance, the
  // same length training slices use.
  std::vector<Matf> slices(count);
  run_parallel(count, jobs, [&](Index i) {
    const ManifestEntry& entry = entries[static_cast<std::size_t>(i)];
    const std::string mel_path =
        (cache / (cache_stem(entry.audio_path) + ".mel.styf")).string();
    if (!fs::exists(mel_path))
      throw Error("missing feature cache for " + entry.audio_path +
                  " (run extract first)");
    const MelSpectrogram mel = load_mel(mel_path);
    if (mel.n_mels() != cfg.mel.n_mels)
      throw Error("cached mel for " + entry.audio_path +
                  " does not match the configured n_mels");
    const Index slice_frames = static_cast<Index>(
        std::floor(cfg.train.slice_duration / mel.frame_period));
    if (slice_frames < 1)
      throw Error("slice_duration is shorter than one frame");
    slices[i] = center_slice(mel, slice_frames);
  });

  EmbeddingSet set;
  set.embeddings.resize(ckpt.config.embedding_dim, count);
  set.style.resize(entries.size());
  set.speaker.resize(entries.size());
  set.synthetic.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    set.style[i] = entries[i].style;
    set.speaker[i] = entries[i].speaker_id;
    set.synthetic[i] = entries[i].synthetic;
  }

  constexpr Index kBatch = 32;
  const Index n_batches = (count + kBatch - 1) / kBatch;
  std::vector<ForwardCache<float>> caches(
      static_cast<std::size_t>(std::max<Index>(
          1, std::min<Index>(n_batches, std::max(1, jobs)))));
  const int workers = static_cast<int>(caches.size());
  run_parallel(n_batches, workers, [&](Index b) {
    const Index begin = b * kBatch;
    const Index len = std::min(kBatch, count - begin);
    std::vector<Matf> batch(slices.begin() + begin,
                            slices.begin() + begin + len);
    // One cache per worker thread; batches are strided across workers.
    ForwardCache<float>& cachebuf =
        caches[static_cast<std::size_t>(b % workers)];
    set.embeddings.middleCols(begin, len) =
        encoder_forward<float>(ckpt.config, ckpt.params, batch, cachebuf);
  });

  save_embeddings(set, out_path);
}

std::string cmd_evaluate(const PipelineConfig& cfg,
                         const std::string& embeddings_path,
                         const std::string& out_dir) {
  const EmbeddingSet set = load_embeddings(embeddings_path);
  if (set.count() == 0) throw Error("embeddings file is empty");
  fs::create_directories(out_dir);

  const Matd emb = set.embeddings.cast<double>();
  const std::vector<bool> held_out = stratified_holdout(
      split_keys(set.speaker, set.style), cfg.split.validation_fraction,
      cfg.seed);

  // Centroids come from training-side rows, ground truth only unless the
  // config opts synthetic rows in.
  std::vector<Index> fit_cols;
  for (Index i = 0; i < set.count(); ++i) {
    if (held_out[static_cast<std::size_t>(i)]) continue;
    if (set.synthetic[static_cast<std::size_t>(i)] &&
        !cfg.eval.include_synthetic_in_centroids)
      continue;
    fit_cols.push_back(i);
  }
  if (fit_cols.empty())
    throw Error("no centroid-eligible rows on the training side");
  Matd fit_emb(emb.rows(), static_cast<Index>(fit_cols.size()));
  std::vector<std::string> fit_labels;
  for (std::size_t i = 0; i < fit_cols.size(); ++i) {
    fit_emb.col(static_cast<Index>(i)) = emb.col(fit_cols[i]);
    fit_labels.push_back(set.style[static_cast<std::size_t>(fit_cols[i])]);
  }
  const CentroidSet centroids = compute_centroids(fit_emb, fit_labels);

  // Held-out nearest-centroid style accuracy on ground-truth rows.
  Index val_n = 0, val_correct = 0;
  for (Index i = 0; i < set.count(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (!held_out[idx] || set.synthetic[idx]) continue;
    ++val_n;
    const auto [pred, scores] = classify_nearest_centroid(emb.col(i), centroids);
    (void)scores;
    if (pred == set.style[idx]) ++val_correct;
  }

  // Leakage probe over every ground-truth row.
  std::vector<Index> gt_cols;
  for (Index i = 0; i < set.count(); ++i)
    if (!set.synthetic[static_cast<std::size_t>(i)]) gt_cols.push_back(i);
  if (gt_cols.empty()) throw Error("no ground-truth rows to probe");
  Matd gt_emb(emb.rows(), static_cast<Index>(gt_cols.size()));
  std::vector<std::string> gt_styles, gt_speakers;
  for (std::size_t i = 0; i < gt_cols.size(); ++i) {
    gt_emb.col(static_cast<Index>(i)) = emb.col(gt_cols[i]);
    gt_styles.push_back(set.style[static_cast<std::size_t>(gt_cols[i])]);
    gt_speakers.push_back(set.speaker[static_cast<std::size_t>(gt_cols[i])]);
  }
  const LeakageReport probe = leakage_probe(gt_emb, gt_styles, gt_speakers,
                                            cfg.eval.probe_holdout, cfg.seed);

  // SECS between per-speaker mean embeddings of ground-truth rows.
  std::map<std::string, std::pair<Vecd, Index>> speaker_means;
  for (std::size_t i = 0; i < gt_cols.size(); ++i) {
    auto& [sum, cnt] = speaker_means[gt_speakers[i]];
    if (cnt == 0) sum = Vecd::Zero(emb.rows());
    sum += gt_emb.col(static_cast<Index>(i));
    ++cnt;
  }
  std::vector<std::string> secs_speakers;
  for (const auto& [speaker, acc] : speaker_means) {
    (void)acc;
    secs_speakers.push_back(speaker);
  }
  Matd secs_matrix(static_cast<Index>(secs_speakers.size()),
                   static_cast<Index>(secs_speakers.size()));
  for (std::size_t a = 0; a < secs_speakers.size(); ++a) {
    const auto& [sum_a, cnt_a] = speaker_means[secs_speakers[a]];
    const Vecd mean_a = sum_a / static_cast<double>(cnt_a);
    for (std::size_t b = 0; b < secs_speakers.size(); ++b) {
      const auto& [sum_b, cnt_b] = speaker_means[secs_speakers[b]];
      secs_matrix(static_cast<Index>(a), static_cast<Index>(b)) =
          secs(mean_a, sum_b / static_cast<double>(cnt_b));
    }
  }

  // Synthetic-expressive rows against their own style centroid vs the
  // neutral centroid.
  const auto centroid_of = [&](const std::string& label) -> const Vecd {
    const auto it = std::lower_bound(centroids.labels.begin(),
                                     centroids.labels.end(), label);
    if (it == centroids.labels.end() || *it != label)
      throw Error("no centroid for style " + label);
    return centroids.centroids.col(it - centroids.labels.begin());
  };
  const bool has_neutral =
      std::binary_search(centroids.labels.begin(), centroids.labels.end(),
                         cfg.eval.neutral_label);
  struct SimAcc {
    double own = 0.0, neutral = 0.0;
    Index n = 0;
  };
  std::map<std::string, SimAcc> synth_sims;
  for (Index i = 0; i < set.count(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (!set.synthetic[idx]) continue;
    if (set.style[idx] == cfg.eval.neutral_label) continue;
    if (!has_neutral) continue;
    if (!std::binary_search(centroids.labels.begin(), centroids.labels.end(),
                            set.style[idx]))
      continue;
    SimAcc& acc = synth_sims[set.style[idx]];
    acc.own += secs(emb.col(i), centroid_of(set.style[idx]));
    acc.neutral += secs(emb.col(i), centroid_of(cfg.eval.neutral_label));
    ++acc.n;
  }

  ordered_json doc;
  doc["arm"] = arm_name(cfg.arm);
  doc["seed"] = cfg.seed;
  Index n_synth = 0;
  for (const bool s : set.synthetic) n_synth += s ? 1 : 0;
  Index n_val = 0;
  for (const bool h : held_out) n_val += h ? 1 : 0;
  doc["counts"] = {{"total", set.count()},
                   {"ground_truth", set.count() - n_synth},
                   {"synthetic", n_synth},
                   {"validation", n_val}};
  doc["style_accuracy"] = {
      {"validation_ground_truth",
       val_n > 0 ? json(static_cast<double>(val_correct) /
                        static_cast<double>(val_n))
                 : json(nullptr)},
      {"n", val_n}};
  ordered_json probe_doc;
  probe_doc["style_accuracy"] = probe.style_accuracy;
  probe_doc["speaker_accuracy"] = probe.speaker_accuracy;
  probe_doc["style_labels"] = probe.style_labels;
  probe_doc["speaker_labels"] = probe.speaker_labels;
  const auto confusion_rows = [](const Eigen::MatrixXi& m) {
    std::vector<std::vector<int>> rows;
    for (Index r = 0; r < m.rows(); ++r) {
      std::vector<int> row;
      for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  probe_doc["style_confusion"] = confusion_rows(probe.style_confusion);
  probe_doc["speaker_confusion"] = confusion_rows(probe.speaker_confusion);
  doc["leakage_probe"] = probe_doc;
  ordered_json secs_doc;
  secs_doc["speakers"] = secs_speakers;
  std::vector<std::vector<double>> secs_rows;
  for (Index r = 0; r < secs_matrix.rows(); ++r) {
    std::vector<double> row;
    for (Index c = 0; c < secs_matrix.cols(); ++c)
      row.push_back(secs_matrix(r, c));
    secs_rows.push_back(std::move(row));
  }
  secs_doc["matrix"] = secs_rows;
  doc["secs"] = secs_doc;
  if (!synth_sims.empty()) {
    double own_sum = 0.0, neutral_sum = 0.0;
    Index n_total = 0;
    ordered_json per_style;
    for (const auto& [style, acc] : synth_sims) {
      per_style[style] = {
          {"own", acc.own / static_cast<double>(acc.n)},
          {"neutral", acc.neutral / static_cast<double>(acc.n)},
          {"n", acc.n}};
      own_sum += acc.own;
      neutral_sum += acc.neutral;
      n_total += acc.n;
    }
    doc["synthetic_similarity"] = {
        {"n", n_total},
        {"mean_to_own_style_centroid",
         own_sum / static_cast<double>(n_total)},
        {"mean_to_neutral_centroid",
         neutral_sum / static_cast<double>(n_total)},
        {"per_style", per_style}};
  }
  doc["centroids"] = {{"labels", centroids.labels},
                      {"counts", centroids.counts}};

  ordered_json centroid_doc;
  centroid_doc["dim"] = centroids.centroids.rows();
  centroid_doc["labels"] = centroids.labels;
  centroid_doc["counts"] = centroids.counts;
  std::vector<std::vector<double>> cent_cols;
  for (Index c = 0; c < centroids.centroids.cols(); ++c) {
    std::vector<double> col;
    for (Index r = 0; r < centroids.centroids.rows(); ++r)
      col.push_back(centroids.centroids(r, c));
    cent_cols.push_back(std::move(col));
  }
  centroid_doc["centroids"] = cent_cols;
  atomic_write_file((fs::path(out_dir) / "centroids.json").string(),
                    centroid_doc.dump(2) + "\n");

  const std::string text = doc.dump(2) + "\n";
  atomic_write_file((fs::path(out_dir) / "evaluation.json").string(), text);
  return text;
}

void cmd_project(const PipelineConfig& cfg, const std::string& embeddings_path,
                 const std::string& out_csv) {
  (void)cfg;
  const EmbeddingSet set = load_embeddings(embeddings_path);
  const Projection2D proj = pca_project(set.embeddings.cast<double>());
  std::string text = "x,y,style,speaker,synthetic\n";
  char buf[80];
  for (Index i = 0; i < set.count(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,", proj.coords(i, 0),
                  proj.coords(i, 1));
    text += buf;
    text += set.style[idx] + "," + set.speaker[idx] + "," +
            (set.synthetic[idx] ? "1" : "0") + "\n";
  }
  atomic_write_file(out_csv, text);
  std::fprintf(stderr, "explained variance: %.6f %.6f\n", proj.explained_1,
               proj.explained_2);
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"style-encoder training and evaluation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arm;
  int jobs = 1;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--arm", arm, "experiment arm: synth_none or synth_both");
  };

  std::string out, manifest, cache = "feature_cache", checkpoint, embeddings;
  std::string resume;

  CLI::App* gen = app.add_subcommand("gen-toy", "render the synthetic corpus");
  add_common(gen);
  gen->add_option("--out", out, "corpus output directory")->required();

  CLI::App* extract =
      app.add_subcommand("extract", "compute features into a cache");
  add_common(extract);
  extract->add_option("--manifest", manifest, "JSONL manifest")->required();
  extract->add_option("--cache", cache, "feature cache directory");
  extract->add_option("--jobs", jobs, "parallel workers");

  CLI::App* trn = app.add_subcommand("train", "train the style encoder");
  add_common(trn);
  trn->add_option("--manifest", manifest, "JSONL manifest")->required();
  trn->add_option("--cache", cache, "feature cache directory");
  trn->add_option("--out", out, "run output directory")->required();
  trn->add_option("--resume", resume, "checkpoint to continue from");

  CLI::App* emb = app.add_subcommand("embed", "embed every manifest entry");
  add_common(emb);
  emb->add_option("--manifest", manifest, "JSONL manifest")->required();
  emb->add_option("--cache", cache, "feature cache directory");
  emb->add_option("--checkpoint", checkpoint, "encoder checkpoint")
      ->required();
  emb->add_option("--out", out, "embeddings output file")->required();
  emb->add_option("--jobs", jobs, "parallel workers");

  CLI::App* eval =
      app.add_subcommand("evaluate", "centroids, accuracy and leakage probe");
  add_common(eval);
  eval->add_option("--embeddings", embeddings, "STYB embeddings file")
      ->required();
  eval->add_option("--out", out, "evaluation output directory")->required();

  CLI::App* proj = app.add_subcommand("project", "2-D PCA projection CSV");
  add_common(proj);
  proj->add_option("--embeddings", embeddings, "STYB embeddings file")
      ->required();
  proj->add_option("--out", out, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    PipelineConfig cfg = load_pipeline_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (arm) cfg.arm = parse_arm(*arm);

    if (gen->parsed()) {
      cmd_gen_toy(cfg, out);
    } else if (extract->parsed()) {
      const int done = cmd_extract(cfg, manifest, cache, jobs);
      std::printf("extract: %d file(s) computed\n", done);
    } else if (trn->parsed()) {
      cmd_train(cfg, manifest, cache, out, resume);
    } else if (emb->parsed()) {
      cmd_embed(cfg, manifest, cache, checkpoint, out, jobs);
    } else if (eval->parsed()) {
      cmd_evaluate(cfg, embeddings, out);
    } else if (proj->parsed()) {
      cmd_project(cfg, embeddings, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace stylekit
