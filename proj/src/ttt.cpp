#include "hsittt/ttt.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace hsittt {

void TTTConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("ttt: learning_rate must be finite and >= 0");
  }
  if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0)) {
    throw ValidationError("ttt: ema_alpha must be in [0, 1]");
  }
  if (!(mixup_lambda >= 0.0 && mixup_lambda <= 1.0)) {
    throw ValidationError("ttt: mixup_lambda must be in [0, 1]");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw ValidationError("ttt: invalid Adam hyperparameters");
  }
}

std::string to_string(TTTPhase phase) {
  return phase == TTTPhase::kPseudo ? "pseudo" : "mixup";
}

template <typename T>
TTTState<T> init_state(const ModelParams<T>& source, const TTTConfig& config) {
  config.validate();
  if (!source.all_finite()) {
    throw ValidationError("source model has non-finite parameters");
  }
  TTTState<T> state;
  state.student = source;
  state.teacher = source;
  state.optimizer = AdamState<T>(source.values.size());
  state.t = 0;
  state.rng.seed(config.seed);
  return state;
}

template <typename T>
ModelParams<T> ema_update(const ModelParams<T>& teacher,
                          const ModelParams<T>& student, double alpha) {
  if (teacher.values.size() != student.values.size() ||
      !(teacher.config == student.config)) {
    throw ValidationError("ema_update: teacher and student shapes differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("ema_update: alpha must be in [0, 1]");
  }
  ModelParams<T> out = teacher;
  const T mix = static_cast<T>(1.0 - alpha);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = teacher.values[i] + mix * (student.values[i] - teacher.values[i]);
  }
  return out;
}

template <typename T>
TTTOps<T> standard_ops(const SRModel<T>& model, const TTTConfig& config) {
  TTTOps<T> ops;
  const ScaleFactor scale = config.scale;
  const AdamConfig adam = config.adam();
  const double alpha = config.ema_alpha;
  const double lambda = config.mixup_lambda;
  auto m = std::make_shared<const SRModel<T>>(model);
  ops.predict = [m, scale](const ModelParams<T>& p, const Volume<T>& lr) {
    return m->super_resolve(lr, scale, p.values);
  };
  ops.degrade = [scale](const Volume<T>& hr) { return downsample(hr, scale); };
  ops.update_student = [m, adam](ModelParams<T>& student, AdamState<T>& opt,
                                 const Volume<T>& input,
                                 const Volume<T>& target) {
    std::vector<T> grad(student.values.size(), T(0));
    const LossValue loss =
        m->loss_and_gradient(input, target, student.values, grad);
    adam_step<T>(student.values, grad, opt, adam);
    return loss;
  };
  ops.ema = [alpha](ModelParams<T>& teacher, const ModelParams<T>& student) {
    teacher = ema_update(teacher, student, alpha);
  };
  ops.mixup = [lambda](const Volume<T>& hr, Rng& rng) {
    return spectral_mixup(hr, sample_mixing_matrix(hr.bands, rng), lambda);
  };
  return ops;
}

template <typename T>
TestTimeTrainer<T>::TestTimeTrainer(ModelConfig model, TTTConfig config)
    : model_(std::move(model)), config_(config) {
  config_.validate();
  ops_ = standard_ops(model_, config_);
}

template <typename T>
TestTimeTrainer<T>::TestTimeTrainer(ModelConfig model, TTTConfig config,
                                    TTTOps<T> ops)
    : model_(std::move(model)), config_(config), ops_(std::move(ops)) {
  config_.validate();
}

template <typename T>
TTTState<T> TestTimeTrainer<T>::init_state(const ModelParams<T>& source) const {
  if (!(source.config == model_.config())) {
    throw ValidationError("source parameters do not match the model");
  }
  return hsittt::init_state(source, config_);
}

namespace {

template <typename T>
void check_finite(const LossValue& loss, const TTTState<T>& state,
                  std::size_t step, const char* phase) {
  if (!std::isfinite(loss.total)) {
    throw DivergenceError(std::string("non-finite ") + phase + " loss", step);
  }
  if (!state.student.all_finite() || !state.teacher.all_finite()) {
    throw DivergenceError(
        std::string("non-finite parameters after ") + phase + " update", step);
  }
}

}  // namespace

template <typename T>
std::vector<StepLoss> TestTimeTrainer<T>::step(TTTState<T>& state,
                                               const Volume<T>& x) const {
  const std::size_t index = state.t + 1;
  std::vector<StepLoss> log;
  try {
    const Volume<T> pseudo_hr = ops_.predict(state.teacher, x);
    const Volume<T> pseudo_lr = ops_.degrade(pseudo_hr);
    LossValue loss =
        ops_.update_student(state.student, state.optimizer, pseudo_lr, pseudo_hr);
    ops_.ema(state.teacher, state.student);
    check_finite(loss, state, index, "pseudo");
    log.push_back({index, TTTPhase::kPseudo, loss});

    if (config_.aug_enabled) {
      const Volume<T> mixed_hr = ops_.mixup(pseudo_hr, state.rng);
      const Volume<T> mixed_lr = ops_.degrade(mixed_hr);
      loss = ops_.update_student(state.student, state.optimizer, mixed_lr,
                                 mixed_hr);
      ops_.ema(state.teacher, state.student);
      check_finite(loss, state, index, "mixup");
      log.push_back({index, TTTPhase::kMixup, loss});
    }
  } catch (const NumericError& e) {
    throw DivergenceError(e.what(), index);
  }
  state.t = index;
  return log;
}

template <typename T>
AdaptResult<T> TestTimeTrainer<T>::adapt(const ModelParams<T>& source,
                                         const Volume<T>& x) const {
  AdaptResult<T> result;
  result.final_state = init_state(source);
  for (std::size_t i = 0; i < config_.steps; ++i) {
    auto entries = step(result.final_state, x);
    result.log.insert(result.log.end(), entries.begin(), entries.end());
  }
  try {
    result.prediction = ops_.predict(result.final_state.teacher, x);
  } catch (const NumericError& e) {
    throw DivergenceError(e.what(), result.final_state.t);
  }
  for (T& v : result.prediction.data) v = std::clamp(v, T(0), T(1));
  return result;
}

CubeAdaptResult adapt(const SRModelParams& source, const HSICube& lr,
                      const TTTConfig& config) {
  TestTimeTrainer<float> trainer(source.config, config);
  auto result = trainer.adapt(source, lr.volume());
  return {HSICube::from_prediction(result.prediction),
          std::move(result.final_state.student),
          std::move(result.final_state.teacher), std::move(result.log)};
}

template TTTState<float> init_state(const ModelParams<float>&,
                                    const TTTConfig&);
template TTTState<double> init_state(const ModelParams<double>&,
                                     const TTTConfig&);
template ModelParams<float> ema_update(const ModelParams<float>&,
                                       const ModelParams<float>&, double);
template ModelParams<double> ema_update(const ModelParams<double>&,
                                        const ModelParams<double>&, double);
template TTTOps<float> standard_ops(const SRModel<float>&, const TTTConfig&);
template TTTOps<double> standard_ops(const SRModel<double>&, const TTTConfig&);
template class TestTimeTrainer<float>;
template class TestTimeTrainer<double>;

}  // namespace hsittt
