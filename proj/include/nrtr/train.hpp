#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nrtr/checkpoint.hpp"
#include "nrtr/config.hpp"
#include "nrtr/data.hpp"
#include "nrtr/model.hpp"

namespace nrtr {

// Optional periodic hook; returning true ends training early (checkpoints
// and the final average are still written).
using TrainHook = std::function<bool(std::int64_t step, Recognizer<float>& model)>;

struct TrainOptions {
    std::string resume_path;         // checkpoint to continue from
    std::vector<ImageSample> corpus; // overrides config data sources when nonempty
    TrainHook hook;
    std::int64_t hook_every = 0;
};

struct TrainOutcome {
    std::int64_t steps_done = 0;
    float last_loss = 0.0f;
    std::string final_checkpoint;     // last single snapshot
    std::string averaged_checkpoint;  // mean of the last <= 10 snapshots
};

// Model parameters as a writable checkpoint (no optimizer state).
Checkpoint snapshot_model(const Recognizer<float>& model);

// Copies checkpoint tensors into the model; IntegrityError on any missing
// tensor or shape mismatch.
void load_model_params(Recognizer<float>& model, const Checkpoint& ckpt);

// Reconstructs the architecture from a checkpoint manifest alone.
ModelConfig config_from_checkpoint(const Checkpoint& ckpt);

// Loads or resumes a Recognizer<float> from a checkpoint written by train().
Recognizer<float> model_from_checkpoint(const std::string& path);

// Teacher-forced training per the run config. Logs `step<TAB>lrate<TAB>loss`
// lines to `log`; writes checkpoints (with optimizer state) every
// checkpoint_every steps and at the end, then averages the last <= 10 into
// `final_avg.nrtr`. Deterministic given config + seed.
TrainOutcome train(const RunConfig& cfg, std::ostream& log, const TrainOptions& opts = {});

} // namespace nrtr
