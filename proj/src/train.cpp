#include "fd4mm/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace fd4mm {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    // Zero is allowed: it freezes the weights, which is useful for checks.
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("train.learning_rate must be >= 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("train.beta1/beta2 must lie in [0, 1)");
    }
    if (steps < 0) {
        throw std::invalid_argument("train.steps must be >= 0");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("train.batch_size must be >= 1");
    }
    if (crop < 8 || crop % 8 != 0) {
        throw std::invalid_argument("train.crop must be a positive multiple of 8");
    }
    if (alpha_max < 0) {
        throw std::invalid_argument("train.alpha_max must be >= 0");
    }
    if (checkpoint_every < 0) {
        throw std::invalid_argument("train.checkpoint_every must be >= 0");
    }
    if (checkpoint_every > 0 && checkpoint_dir.empty()) {
        throw std::invalid_argument("train.checkpoint_dir is required when checkpoint_every > 0");
    }
    loss.validate();
}

void to_json(json& j, const TrainConfig& cfg) {
    j = json{{"learning_rate", cfg.learning_rate},
             {"beta1", cfg.beta1},
             {"beta2", cfg.beta2},
             {"steps", cfg.steps},
             {"batch_size", cfg.batch_size},
             {"crop", cfg.crop},
             {"alpha_max", cfg.alpha_max},
             {"seed", cfg.seed},
             {"loss", cfg.loss},
             {"checkpoint_every", cfg.checkpoint_every},
             {"checkpoint_dir", cfg.checkpoint_dir},
             {"dump_dir", cfg.dump_dir}};
}

void from_json(const json& j, TrainConfig& cfg) {
    auto field = [&](const char* key, auto& value) {
        if (!j.contains(key)) {
            return;
        }
        try {
            j.at(key).get_to(value);
        } catch (const json::exception&) {
            throw std::invalid_argument(std::string("train.") + key + ": wrong type");
        }
    };
    field("learning_rate", cfg.learning_rate);
    field("beta1", cfg.beta1);
    field("beta2", cfg.beta2);
    field("steps", cfg.steps);
    field("batch_size", cfg.batch_size);
    field("crop", cfg.crop);
    field("alpha_max", cfg.alpha_max);
    field("seed", cfg.seed);
    field("checkpoint_every", cfg.checkpoint_every);
    field("checkpoint_dir", cfg.checkpoint_dir);
    field("dump_dir", cfg.dump_dir);
    if (j.contains("loss")) {
        cfg.loss = j.at("loss").get<LossConfig>();
    }
}

namespace {

int64_t uniform(std::mt19937_64& rng, int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

Tensor crop_at(const Frame& f, int64_t y, int64_t x, int64_t size) {
    return f.pixels().narrow(1, y, size).narrow(2, x, size).to(torch::kFloat32);
}

TrainingBatch stack(std::vector<Tensor>& ref, std::vector<Tensor>& query, std::vector<Tensor>& gt,
                    std::vector<double>& alpha) {
    return {torch::stack(ref), torch::stack(query), torch::stack(gt),
            torch::tensor(alpha, torch::kFloat64).to(torch::kFloat32)};
}

}  // namespace

SequenceSource::SequenceSource(std::vector<SamplePair> sequences) : sequences_(std::move(sequences)) {
    if (sequences_.empty()) {
        throw std::invalid_argument("training needs at least one sequence");
    }
    for (const auto& s : sequences_) {
        if (s.input.size() < 2 || s.input.size() != s.gt.size()) {
            throw std::invalid_argument("training sequence needs >= 2 frames and matching ground truth");
        }
    }
}

TrainingBatch SequenceSource::draw(int64_t batch, int64_t crop, std::mt19937_64& rng) {
    std::vector<Tensor> ref, query, gt;
    std::vector<double> alpha;
    for (int64_t b = 0; b < batch; ++b) {
        const auto& seq = sequences_[static_cast<size_t>(uniform(rng, 0, static_cast<int64_t>(sequences_.size()) - 1))];
        const int64_t h = seq.input[0].height();
        const int64_t w = seq.input[0].width();
        if (h < crop || w < crop) {
            throw std::invalid_argument("crop " + std::to_string(crop) + " exceeds frame size " + std::to_string(h) +
                                        "x" + std::to_string(w));
        }
        const auto t = static_cast<size_t>(uniform(rng, 1, static_cast<int64_t>(seq.input.size()) - 1));
        const int64_t y = uniform(rng, 0, h - crop);
        const int64_t x = uniform(rng, 0, w - crop);
        ref.push_back(crop_at(seq.input[0], y, x, crop));
        query.push_back(crop_at(seq.input[t], y, x, crop));
        gt.push_back(crop_at(seq.gt[t], y, x, crop));
        alpha.push_back(seq.spec.alpha);
    }
    return stack(ref, query, gt, alpha);
}

SyntheticSource::SyntheticSource(const SynthSpec& spec, int64_t alpha_max)
    : scene_(Scene::from_spec(spec)), alpha_max_(alpha_max) {
    if (alpha_max_ < 1) {
        throw std::invalid_argument("synthetic source needs alpha_max >= 1");
    }
    // Fail early if the largest magnified excursion leaves the frame.
    const double reach = spec.input_amplitude * static_cast<double>(alpha_max_);
    composite_at(scene_, reach);
    composite_at(scene_, -reach);
}

TrainingBatch SyntheticSource::draw(int64_t batch, int64_t crop, std::mt19937_64& rng) {
    const SynthSpec& spec = scene_.spec;
    if (spec.height < crop || spec.width < crop) {
        throw std::invalid_argument("crop exceeds synthetic frame size");
    }
    std::vector<Tensor> ref, query, gt;
    std::vector<double> alpha;
    for (int64_t b = 0; b < batch; ++b) {
        const double a = static_cast<double>(uniform(rng, 1, alpha_max_));
        const int64_t t = uniform(rng, 1, spec.period - 1);
        const int64_t y = uniform(rng, 0, spec.height - crop);
        const int64_t x = uniform(rng, 0, spec.width - crop);
        const uint64_t noise_seed = rng();
        const Frame r = add_noise(composite_at(scene_, 0.0), spec.noise_sigma, noise_seed, 0);
        const Frame q = add_noise(composite_at(scene_, motion_profile(t, spec.input_amplitude, spec.period)),
                                  spec.noise_sigma, noise_seed, t);
        const Frame g = composite_at(scene_, motion_profile(t, spec.input_amplitude * a, spec.period));
        ref.push_back(crop_at(r, y, x, crop));
        query.push_back(crop_at(q, y, x, crop));
        gt.push_back(crop_at(g, y, x, crop));
        alpha.push_back(a);
    }
    return stack(ref, query, gt, alpha);
}

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 std::shared_ptr<const PerceptualBackend> backend)
    : model_cfg_(model_cfg), train_cfg_(train_cfg), backend_(std::move(backend)), rng_(train_cfg.seed) {
    model_cfg_.validate();
    train_cfg_.validate();
    if (!backend_) {
        throw std::invalid_argument("perceptual backend not initialized");
    }
    torch::manual_seed(train_cfg_.seed);
    model_ = MagnificationNet(model_cfg_);
    make_optimizer();
}

Trainer::Trainer(const Checkpoint& ckpt, const TrainConfig& train_cfg,
                 std::shared_ptr<const PerceptualBackend> backend)
    : model_cfg_(ckpt.model), train_cfg_(train_cfg), backend_(std::move(backend)), step_(ckpt.step) {
    train_cfg_.validate();
    if (!backend_) {
        throw std::invalid_argument("perceptual backend not initialized");
    }
    model_ = build_model(ckpt);
    make_optimizer();
    if (!ckpt.optimizer.empty()) {
        auto params = model_->parameters();
        if (params.size() != ckpt.optimizer.size()) {
            throw std::runtime_error("checkpoint optimizer state does not match the model");
        }
        auto& state = optimizer_->state();
        for (size_t i = 0; i < params.size(); ++i) {
            const AdamSlot& slot = ckpt.optimizer[i];
            if (slot.step == 0) {
                continue;
            }
            auto s = std::make_unique<torch::optim::AdamParamState>();
            s->step(slot.step);
            s->exp_avg(slot.exp_avg.clone());
            s->exp_avg_sq(slot.exp_avg_sq.clone());
            state[params[i].unsafeGetTensorImpl()] = std::move(s);
        }
    }
    if (ckpt.rng_state.empty()) {
        rng_.seed(train_cfg_.seed);
    } else {
        std::istringstream in(ckpt.rng_state);
        in >> rng_;
        if (!in) {
            throw std::runtime_error("checkpoint RNG state corrupt");
        }
    }
}

void Trainer::make_optimizer() {
    torch::optim::AdamOptions opts(train_cfg_.learning_rate);
    opts.betas({train_cfg_.beta1, train_cfg_.beta2});
    optimizer_ = std::make_unique<torch::optim::Adam>(model_->parameters(), opts);
}

TrainingBatch Trainer::draw(SampleSource& source) {
    return source.draw(train_cfg_.batch_size, train_cfg_.crop, rng_);
}

LossValues Trainer::train_step(const TrainingBatch& batch) {
    model_->train();
    optimizer_->zero_grad();
    const Tensor pred = model_->forward(batch.reference, batch.query, batch.alpha);
    const LossBreakdown loss = total_loss(pred, batch.ground_truth, batch.query, *backend_, train_cfg_.loss);
    LossValues v{loss.total.item<double>(), loss.magnification.item<double>(), loss.edge.item<double>(),
                 loss.regularizer.item<double>()};
    if (!std::isfinite(v.total) || !std::isfinite(v.magnification) || !std::isfinite(v.edge) ||
        !std::isfinite(v.regularizer)) {
        char name[48];
        std::snprintf(name, sizeof(name), "nonfinite_step_%06lld.pt", static_cast<long long>(step_ + 1));
        const fs::path dump = fs::path(train_cfg_.dump_dir) / name;
        fs::create_directories(dump.parent_path());
        torch::save(std::vector<Tensor>{batch.reference, batch.query, batch.ground_truth, batch.alpha}, dump.string());
        throw NonFiniteLossError("non-finite loss at step " + std::to_string(step_ + 1) + "; batch written to " +
                                 dump.string());
    }
    loss.total.backward();
    optimizer_->step();
    ++step_;
    return v;
}

Checkpoint Trainer::snapshot() const {
    Checkpoint ckpt;
    ckpt.model = model_cfg_;
    ckpt.train = train_cfg_;
    ckpt.step = step_;
    for (const auto& item : model_->named_parameters()) {
        ckpt.parameters.emplace_back(item.key(), item.value().detach().clone());
    }
    const auto& state = optimizer_->state();
    for (const auto& p : model_->parameters()) {
        AdamSlot slot;
        auto it = state.find(p.unsafeGetTensorImpl());
        if (it != state.end()) {
            const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
            slot.step = s.step();
            slot.exp_avg = s.exp_avg().clone();
            slot.exp_avg_sq = s.exp_avg_sq().clone();
        }
        ckpt.optimizer.push_back(std::move(slot));
    }
    std::ostringstream out;
    out << rng_;
    ckpt.rng_state = out.str();
    return ckpt;
}

FitResult fit(const ModelConfig& model_cfg, const TrainConfig& train_cfg, SampleSource& source,
              std::shared_ptr<const PerceptualBackend> backend, const Checkpoint* resume,
              const StepCallback& on_step) {
    if (resume != nullptr && json(resume->model) != json(model_cfg)) {
        throw std::invalid_argument("resume checkpoint was trained with a different model configuration");
    }
    Trainer trainer = resume != nullptr ? Trainer(*resume, train_cfg, backend) : Trainer(model_cfg, train_cfg, backend);
    FitResult result;
    while (trainer.step() < train_cfg.steps) {
        const TrainingBatch batch = trainer.draw(source);
        const LossValues v = trainer.train_step(batch);
        result.history.push_back(v);
        if (on_step) {
            on_step(trainer.step(), v);
        }
        if (train_cfg.checkpoint_every > 0 && trainer.step() % train_cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%06lld.ckpt", static_cast<long long>(trainer.step()));
            save_checkpoint(fs::path(train_cfg.checkpoint_dir) / name, trainer.snapshot());
        }
    }
    result.checkpoint = trainer.snapshot();
    return result;
}

const std::vector<double>& default_eval_alphas() {
    static const std::vector<double> v{5, 10, 20, 50, 100};
    return v;
}

const std::vector<double>& default_eval_sigmas() {
    static const std::vector<double> v{0.01, 0.05, 0.1, 0.2};
    return v;
}

MetricReport evaluate_pair(MagnificationNet& model, const SamplePair& pair, double alpha,
                           const PerceptualBackend& backend, int64_t frame_stride) {
    if (frame_stride < 1) {
        throw std::invalid_argument("frame stride must be >= 1");
    }
    model->eval();
    MetricReport report;
    report.perceptual_backend = backend.name();
    report.perceptual_backend_kind = backend.kind();
    const SynthSpec& spec = pair.spec;
    for (size_t t = 1; t < pair.input.size(); t += static_cast<size_t>(frame_stride)) {
        const Frame pred = model->magnify(pair.input[0], pair.input[t], alpha);
        report.ssim.push_back(ssim(pred, pair.gt[t]));
        report.perceptual.push_back(perceptual_distance(pred, pair.gt[t], &backend));
        const auto [ey, ex] =
            axis_displacement(spec.axis, motion_profile(static_cast<int64_t>(t), spec.input_amplitude * alpha, spec.period));
        try {
            const Displacement d = estimate_displacement(pair.input[0], pred);
            report.displacement_error.push_back(std::hypot(d.dy - ey, d.dx - ex));
        } catch (const std::runtime_error&) {
            // Flat prediction: no displacement to report for this frame.
        }
    }
    return report;
}

EvaluationGrid evaluate_run(MagnificationNet& model, const std::vector<std::pair<std::string, SynthSpec>>& sequences,
                            std::vector<double> alphas, std::vector<double> sigmas, const PerceptualBackend& backend,
                            int64_t frame_stride) {
    if (alphas.empty()) {
        throw std::invalid_argument("evaluation needs at least one alpha");
    }
    if (std::find(sigmas.begin(), sigmas.end(), 0.0) == sigmas.end()) {
        sigmas.insert(sigmas.begin(), 0.0);
    }
    EvaluationGrid grid;
    grid.alphas = alphas;
    grid.sigmas = sigmas;
    grid.backend = backend.name();
    grid.backend_kind = backend.kind();
    for (const auto& [name, base] : sequences) {
        EvaluationRow row;
        row.sequence = name;
        for (double alpha : alphas) {
            for (double sigma : sigmas) {
                EvaluationCell cell;
                cell.alpha = alpha;
                cell.sigma = sigma;
                SynthSpec spec = base;
                spec.alpha = alpha;
                spec.noise_sigma = sigma;
                try {
                    const SamplePair pair = synthesize_sequence(spec);
                    cell.report = evaluate_pair(model, pair, alpha, backend, frame_stride);
                } catch (const std::out_of_range& e) {
                    cell.error = e.what();
                    cell.report.perceptual_backend = backend.name();
                    cell.report.perceptual_backend_kind = backend.kind();
                }
                row.cells.push_back(std::move(cell));
            }
        }
        grid.rows.push_back(std::move(row));
    }
    return grid;
}

void to_json(json& j, const EvaluationGrid& grid) {
    j = json{{"alphas", grid.alphas},
             {"sigmas", grid.sigmas},
             {"perceptual_backend", grid.backend},
             {"perceptual_backend_kind", grid.backend_kind},
             {"sequences", json::array()}};
    for (const auto& row : grid.rows) {
        json cells = json::array();
        for (const auto& c : row.cells) {
            json cell{{"alpha", c.alpha}, {"sigma", c.sigma}, {"report", c.report}};
            if (!c.error.empty()) {
                cell["error"] = c.error;
            }
            cells.push_back(std::move(cell));
        }
        j["sequences"].push_back({{"name", row.sequence}, {"cells", std::move(cells)}});
    }
}

}  // namespace fd4mm
