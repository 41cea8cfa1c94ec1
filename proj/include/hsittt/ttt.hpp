#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hsittt/augment.hpp"
#include "hsittt/cube.hpp"
#include "hsittt/losses.hpp"
#include "hsittt/model.hpp"
#include "hsittt/optim.hpp"

namespace hsittt {

// Defaults: T = 20 iterations, Adam at 1e-5, EMA factor 0.99, mixup weight
// 0.5.
struct TTTConfig {
  std::size_t steps = 20;
  double learning_rate = 1e-5;
  double ema_alpha = 0.99;
  double mixup_lambda = 0.5;
  ScaleFactor scale{2.0};
  bool aug_enabled = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  AdamConfig adam() const {
    return {learning_rate, adam_beta1, adam_beta2, adam_epsilon};
  }
  void validate() const;
};

template <typename T>
struct TTTState {
  ModelParams<T> student;
  ModelParams<T> teacher;
  AdamState<T> optimizer;
  // Completed iterations.
  std::size_t t = 0;
  // Source of the per-iteration mixing matrices, seeded from the config.
  Rng rng;
};

// Student and teacher both start as bit copies of the source; Adam moments
// are zero. Throws ValidationError on non-finite source parameters.
template <typename T>
TTTState<T> init_state(const ModelParams<T>& source, const TTTConfig& config);

// alpha * teacher + (1 - alpha) * student, evaluated as
// teacher + (1 - alpha) * (student - teacher) so that alpha = 1 and
// student == teacher are exact fixed points.
template <typename T>
ModelParams<T> ema_update(const ModelParams<T>& teacher,
                          const ModelParams<T>& student, double alpha);

enum class TTTPhase { kPseudo, kMixup };
std::string to_string(TTTPhase phase);

struct StepLoss {
  std::size_t step = 0;  // one-based iteration index
  TTTPhase phase = TTTPhase::kPseudo;
  LossValue loss;
};

// The operations one iteration is built from. TestTimeTrainer wires them to
// the real model; tests substitute recording wrappers.
template <typename T>
struct TTTOps {
  // HR prediction of lr at the configured scale.
  std::function<Volume<T>(const ModelParams<T>&, const Volume<T>&)> predict;
  // The shared degradation operator.
  std::function<Volume<T>(const Volume<T>&)> degrade;
  // One optimizer step on total_loss(student(input), target); returns the
  // loss before the step.
  std::function<LossValue(ModelParams<T>&, AdamState<T>&, const Volume<T>&,
                          const Volume<T>&)>
      update_student;
  std::function<void(ModelParams<T>&, const ModelParams<T>&)> ema;
  // Spectral Mixup with a fresh mixing matrix drawn from rng.
  std::function<Volume<T>(const Volume<T>&, Rng&)> mixup;
};

template <typename T>
struct AdaptResult {
  // Teacher prediction after the last iteration, clamped to [0, 1].
  Volume<T> prediction;
  TTTState<T> final_state;
  std::vector<StepLoss> log;
};

template <typename T>
class TestTimeTrainer {
 public:
  TestTimeTrainer(ModelConfig model, TTTConfig config);
  TestTimeTrainer(ModelConfig model, TTTConfig config, TTTOps<T> ops);

  const TTTConfig& config() const { return config_; }
  const TTTOps<T>& ops() const { return ops_; }
  const SRModel<T>& model() const { return model_; }

  TTTState<T> init_state(const ModelParams<T>& source) const;

  // One iteration on the LR input x:
  //   1. X = predict(teacher, x)          5. Xm = mixup(X, fresh B)
  //   2. xd = degrade(X)                  6. xm = degrade(Xm)
  //   3. student step on (xd -> X)        7. student step on (xm -> Xm)
  //   4. teacher <- EMA(teacher, student) 8. teacher <- EMA(teacher, student)
  // Steps 5-8 run only with aug_enabled. The pseudo pair is rebuilt from the
  // current teacher every call, and X from step 1 is reused by step 5.
  // Throws DivergenceError if a loss or parameter becomes non-finite.
  std::vector<StepLoss> step(TTTState<T>& state, const Volume<T>& x) const;

  // config.steps iterations from the source, then the teacher's prediction.
  AdaptResult<T> adapt(const ModelParams<T>& source, const Volume<T>& x) const;

 private:
  SRModel<T> model_;
  TTTConfig config_;
  TTTOps<T> ops_;
};

// The production operations for a model and config.
template <typename T>
TTTOps<T> standard_ops(const SRModel<T>& model, const TTTConfig& config);

// Float convenience: adapt on a validated LR cube.
struct CubeAdaptResult {
  HSICube prediction;
  SRModelParams student;
  SRModelParams teacher;
  std::vector<StepLoss> log;
};
CubeAdaptResult adapt(const SRModelParams& source, const HSICube& lr,
                      const TTTConfig& config);

}  // namespace hsittt
