#pragma once

#include <stdexcept>
#include <string>

namespace ctsat {

/// Bad caller input: violated preconditions, malformed files, schema errors.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A well-formed request that failed while computing (divergence, singularity).
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Max-abs normalizer is zero (all-zero waveform).
class UndefinedNormalizer : public InputError {
public:
    using InputError::InputError;
};

/// Input sequence shorter than the network's receptive field.
class LengthError : public InputError {
public:
    LengthError(std::size_t length, std::size_t receptive_field)
        : InputError("input length " + std::to_string(length) +
                     " is shorter than the receptive field of " +
                     std::to_string(receptive_field) + " samples"),
          receptive_field_(receptive_field) {}

    std::size_t receptive_field() const noexcept { return receptive_field_; }

private:
    std::size_t receptive_field_;
};

/// Not enough unsaturated samples to seed or run the parameter fit.
class InsufficientData : public InputError {
public:
    using InputError::InputError;
};

class SimulationDiverged : public ComputationError {
public:
    explicit SimulationDiverged(std::size_t step)
        : ComputationError("simulation diverged at step " + std::to_string(step)),
          step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class TrainingDiverged : public ComputationError {
public:
    TrainingDiverged(int epoch, std::size_t batch)
        : ComputationError("training loss became non-finite at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    int epoch_;
    std::size_t batch_;
};

}  // namespace ctsat
