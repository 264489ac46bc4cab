#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "neurodiff/augment.hpp"
#include "neurodiff/optim.hpp"
#include "neurodiff/schedule.hpp"
#include "neurodiff/unet.hpp"
#include "neurodiff/volume.hpp"

namespace neurodiff {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 4;
    int epochs = 100;
    AugmentLimits augment_limits{};
    bool augment = true;
    double ema_momentum = 0.1;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    bool diverged = false;
};

struct TrainResult {
    std::vector<double> weights;
    EmaState ema;
    std::vector<EpochRecord> history;
    bool diverged = false;
    /// Last epoch whose weights were all finite; 0 if none completed.
    int last_good_epoch = 0;
};

/// Lets callers inspect or perturb each clean batch before it is noised.
using BatchHook = std::function<void(int epoch, int step, std::vector<Field>& batch)>;

/// Trains `net` in place. On a non-finite loss, gradient or parameter the
/// current epoch is abandoned, weights roll back to the last good epoch and
/// the EMA keeps the state it had there.
TrainResult train(TinyUNet& net, const std::vector<Volume>& dataset, const NoiseSchedule& schedule,
                  const TrainConfig& cfg, const BatchHook& hook = {});

/// CSV with columns epoch,mean_loss,diverged.
void write_loss_csv(std::ostream& os, const std::vector<EpochRecord>& history);

}  // namespace neurodiff
