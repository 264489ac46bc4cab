#include "neurodiff/train.hpp"

#include <cmath>
#include <ostream>

#include "neurodiff/error.hpp"
#include "neurodiff/param.hpp"
#include "neurodiff/rng.hpp"

namespace neurodiff {
namespace {

bool all_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace

TrainResult train(TinyUNet& net, const std::vector<Volume>& dataset, const NoiseSchedule& schedule,
                  const TrainConfig& cfg, const BatchHook& hook) {
    if (dataset.empty()) {
        throw Error(Errc::empty_dataset, "training needs at least one volume");
    }
    if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0) ||
        cfg.augment_limits.max_rotation_deg < 0.0 || cfg.augment_limits.max_translation_mm < 0.0) {
        throw Error(Errc::invalid_parameter, "invalid training configuration");
    }
    const Dims shape = dataset.front().dims();
    for (const Volume& v : dataset) {
        if (!(v.dims() == shape)) {
            throw Error(Errc::shape_mismatch, "dataset volumes differ in shape");
        }
    }

    const std::size_t n_items = dataset.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps_per_epoch = (n_items + batch - 1) / batch;
    const std::size_t voxels = shape.size();
    const Rng root(cfg.seed, /*stream=*/0x747261696e);

    TrainResult result;
    result.ema.momentum = cfg.ema_momentum;
    AdamState adam;
    std::vector<double> good_weights(net.parameters().begin(), net.parameters().end());
    AdamState good_adam;
    std::vector<double> grad(net.parameter_count());

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = root.fork(static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order(n_items);
        for (std::size_t i = 0; i < n_items; ++i) order[i] = i;
        for (std::size_t i = n_items; i > 1; --i) {
            std::swap(order[i - 1], order[epoch_rng.below(i)]);
        }

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        bool diverged = false;
        for (std::size_t step = 0; step < steps_per_epoch && !diverged; ++step) {
            std::vector<Field> clean(batch);
            std::vector<std::uint64_t> item_seed(batch);
            for (std::size_t k = 0; k < batch; ++k) {
                const Volume& src = dataset[order[(step * batch + k) % n_items]];
                item_seed[k] = epoch_rng.next_u64();
                clean[k] = cfg.augment ? to_field(augment(src, item_seed[k], cfg.augment_limits))
                                       : to_field(src);
            }
            if (hook) {
                hook(epoch, static_cast<int>(step), clean);
            }

            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            const double scale = 2.0 / (static_cast<double>(voxels) * static_cast<double>(batch));
            for (std::size_t k = 0; k < batch; ++k) {
                Rng item_rng(item_seed[k], /*stream=*/0x6e6f697365);
                const int t = static_cast<int>(item_rng.below(static_cast<std::uint64_t>(schedule.steps())));
                const double ab = schedule.alpha_bar(t);
                Field eps(voxels);
                item_rng.fill_normal(eps);
                const Field xt = forward_diffuse(clean[k], eps, ab);
                const Field target = make_target(net.kind(), clean[k], eps, ab);
                double item_loss = 0.0;
                net.forward_backward(
                    xt, shape, t,
                    [&](std::span<const double> pred) {
                        item_loss = training_loss(pred, target);
                        Field up(pred.size());
                        for (std::size_t i = 0; i < up.size(); ++i) {
                            up[i] = scale * (pred[i] - target[i]);
                        }
                        return up;
                    },
                    grad);
                batch_loss += item_loss;
            }
            batch_loss /= static_cast<double>(batch);

            if (!std::isfinite(batch_loss)) {
                diverged = true;
                break;
            }
            try {
                adam_step(net.parameters(), grad, adam, cfg.learning_rate);
            } catch (const Error& e) {
                if (e.code() != Errc::training_diverged) throw;
                diverged = true;
                break;
            }
            if (!all_finite(net.parameters())) {
                diverged = true;
                break;
            }
            loss_sum += batch_loss;
            ++loss_count;
        }

        if (diverged) {
            net.set_parameters(good_weights);
            adam = good_adam;
            result.history.push_back({epoch, loss_count ? loss_sum / static_cast<double>(loss_count)
                                                        : std::nan(""),
                                      true});
            result.diverged = true;
            break;
        }

        ema_update(result.ema, net.parameters());
        good_weights.assign(net.parameters().begin(), net.parameters().end());
        good_adam = adam;
        result.last_good_epoch = epoch;
        result.history.push_back({epoch, loss_sum / static_cast<double>(loss_count), false});
    }

    result.weights.assign(net.parameters().begin(), net.parameters().end());
    return result;
}

void write_loss_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
    os << "epoch,mean_loss,diverged\n";
    const auto old_precision = os.precision(17);
    for (const EpochRecord& r : history) {
        os << r.epoch << ',' << r.mean_loss << ',' << (r.diverged ? 1 : 0) << '\n';
    }
    os.precision(old_precision);
}

}  // namespace neurodiff
