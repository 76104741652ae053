#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "friction/eval.hpp"
#include "friction/mamdp.hpp"

namespace friction::pipeline {

using core::json;
using tasks::TaskConfig;

// ---------------------------------------------------------------------------
// Config and manifest
// ---------------------------------------------------------------------------

struct PipelineConfig {
    TaskConfig task;
    int datagen_dialogues = 20;
    bool augment = false;
    std::vector<std::string> objectives = {"faaf"};
    int train_steps = 500;
    double step_size = 0.1;
    double beta = 0.1;
    int eval_dialogues = 10;
    bool eval_ma = true; // additionally run the MA variants

    json to_json() const;
    static PipelineConfig from_json(const json& j);
    static PipelineConfig load(const std::string& path);
    std::string digest() const;
};

/// Raised by a failing stage; the CLI maps it to a nonzero exit naming the
/// stage.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error(message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

struct StageStatus {
    std::string name;
    bool skipped = false;
    std::vector<std::string> artifacts; // paths relative to the output dir
};

struct PipelineResult {
    std::vector<StageStatus> stages;
    std::string manifest_path;
};

/// datagen -> train (per objective) -> eval (F, NF, MA) -> report. Stages
/// whose artifacts already exist with matching digests (per manifest.json)
/// are skipped; artifact bytes depend only on config + seed.
PipelineResult run_pipeline(const PipelineConfig& config, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

std::vector<CheckResult> verify();
std::string render_checks(const std::vector<CheckResult>& checks);
json checks_json(const std::vector<CheckResult>& checks);

} // namespace friction::pipeline
