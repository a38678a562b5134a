#include "ctsat/fcn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ctsat/error.hpp"
#include "ctsat/kernels.hpp"

namespace ctsat {

namespace {

constexpr int kModelSchemaVersion = 1;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void apply_activation(Activation a, std::vector<double>& v) {
    switch (a) {
        case Activation::Identity: break;
        case Activation::Tanh:
            for (double& x : v) x = std::tanh(x);
            break;
        case Activation::Sigmoid:
            for (double& x : v) x = 1.0 / (1.0 + std::exp(-x));
            break;
    }
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw InputError("unknown activation '" + name + "'");
}

nlohmann::json fcn::ArchitectureSpec::to_json() const {
    return {{"stem_kernel", stem_kernel},       {"stem_channels", stem_channels},
            {"branch_kernels", branch_kernels}, {"branch_channels", branch_channels},
            {"block_channels", block_channels}, {"blocks", blocks}};
}

fcn::ArchitectureSpec fcn::ArchitectureSpec::from_json(const nlohmann::json& j) {
    ArchitectureSpec s;
    s.stem_kernel = j.value("stem_kernel", s.stem_kernel);
    s.stem_channels = j.value("stem_channels", s.stem_channels);
    s.branch_kernels = j.value("branch_kernels", s.branch_kernels);
    s.branch_channels = j.value("branch_channels", s.branch_channels);
    s.block_channels = j.value("block_channels", s.block_channels);
    s.blocks = j.value("blocks", s.blocks);
    return s;
}

FcnModel::FcnModel() { nodes_.emplace_back(fcn::InputNode{}); }

FcnModel FcnModel::build(const fcn::ArchitectureSpec& spec, std::uint64_t seed) {
    if (spec.branch_kernels.empty()) throw InputError("architecture needs at least one branch");
    FcnModel m;
    int x = m.add_conv(0, spec.stem_kernel, spec.stem_channels, Activation::Tanh);
    for (std::size_t b = 0; b < spec.blocks; ++b) {
        std::vector<int> branches;
        for (std::size_t k : spec.branch_kernels)
            branches.push_back(m.add_conv(x, k, spec.branch_channels, Activation::Tanh));
        const int cat = m.add_concat(branches);
        x = m.add_conv(cat, 1, spec.block_channels, Activation::Tanh);
    }
    m.add_conv(x, 1, 1, Activation::Sigmoid);
    m.architecture = spec.to_json();
    m.architecture["kind"] = "inception1d";
    m.init_weights(seed);
    m.validate();
    return m;
}

std::size_t FcnModel::channels(int node) const {
    if (node < 0 || static_cast<std::size_t>(node) >= nodes_.size()) throw InputError("node index out of range");
    return std::visit(overloaded{[](const fcn::InputNode&) -> std::size_t { return 1; },
                                 [](const fcn::ConvNode& c) -> std::size_t { return c.out_ch; },
                                 [this](const fcn::ConcatNode& c) -> std::size_t {
                                     std::size_t n = 0;
                                     for (int s : c.sources) n += channels(s);
                                     return n;
                                 }},
                      nodes_[static_cast<std::size_t>(node)]);
}

int FcnModel::add_conv(int source, std::size_t kernel, std::size_t out_ch, Activation activation) {
    if (source < 0 || static_cast<std::size_t>(source) >= nodes_.size()) throw InputError("conv source out of range");
    if (kernel % 2 == 0) throw InputError("kernel widths must be odd for same-length padding");
    if (out_ch == 0) throw InputError("conv needs at least one output channel");
    fcn::ConvNode c;
    c.source = source;
    c.kernel = kernel;
    c.in_ch = channels(source);
    c.out_ch = out_ch;
    c.activation = activation;
    c.offset = params_.size();
    params_.resize(params_.size() + c.param_count(), 0.0);
    nodes_.emplace_back(c);
    return static_cast<int>(nodes_.size() - 1);
}

int FcnModel::add_concat(std::vector<int> sources) {
    if (sources.empty()) throw InputError("concat needs at least one source");
    for (int s : sources)
        if (s < 0 || static_cast<std::size_t>(s) >= nodes_.size()) throw InputError("concat source out of range");
    nodes_.emplace_back(fcn::ConcatNode{std::move(sources)});
    return static_cast<int>(nodes_.size() - 1);
}

void FcnModel::init_weights(std::uint64_t seed) {
    seed_ = seed;
    std::mt19937_64 rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    for (const auto& n : nodes_) {
        const auto* c = std::get_if<fcn::ConvNode>(&n);
        if (!c) continue;
        const double bound = std::sqrt(1.0 / static_cast<double>(c->in_ch * c->kernel));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < c->weight_count(); ++i) params_[c->offset + i] = u(rng);
    }
}

std::size_t FcnModel::receptive_field() const {
    std::vector<std::size_t> radius(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        radius[i] = std::visit(overloaded{[](const fcn::InputNode&) -> std::size_t { return 0; },
                                          [&](const fcn::ConvNode& c) {
                                              return radius[static_cast<std::size_t>(c.source)] + c.kernel / 2;
                                          },
                                          [&](const fcn::ConcatNode& c) {
                                              std::size_t r = 0;
                                              for (int s : c.sources) r = std::max(r, radius[static_cast<std::size_t>(s)]);
                                              return r;
                                          }},
                               nodes_[i]);
    }
    return 2 * radius.back() + 1;
}

void FcnModel::validate() const {
    const auto* head = std::get_if<fcn::ConvNode>(&nodes_.back());
    if (!head || head->out_ch != 1 || head->activation != Activation::Sigmoid)
        throw InputError("the output node must be a one-channel sigmoid convolution");
}

void FcnModel::check_length(std::size_t length) const {
    const std::size_t rf = receptive_field();
    if (length < rf) throw LengthError(length, rf);
}

void FcnModel::forward_batch(const double* x, std::size_t batch, std::size_t length, fcn::ForwardCache& cache) const {
    check_length(length);
    cache.batch = batch;
    cache.length = length;
    cache.outputs.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        auto& out = cache.outputs[i];
        std::visit(overloaded{[&](const fcn::InputNode&) { out.assign(x, x + batch * length); },
                              [&](const fcn::ConvNode& c) {
                                  out.resize(batch * c.out_ch * length);
                                  const kernels::ConvShape s{batch, c.in_ch, c.out_ch, c.kernel, length};
                                  const double* w = params_.data() + c.offset;
                                  kernels::conv1d_forward(s, cache.outputs[static_cast<std::size_t>(c.source)].data(), w,
                                                          w + c.weight_count(), out.data());
                                  apply_activation(c.activation, out);
                              },
                              [&](const fcn::ConcatNode& c) {
                                  const std::size_t total = channels(static_cast<int>(i));
                                  out.resize(batch * total * length);
                                  for (std::size_t n = 0; n < batch; ++n) {
                                      std::size_t ch = 0;
                                      for (int s : c.sources) {
                                          const std::size_t cs = channels(s);
                                          const double* src = cache.outputs[static_cast<std::size_t>(s)].data() + n * cs * length;
                                          std::copy(src, src + cs * length, out.data() + (n * total + ch) * length);
                                          ch += cs;
                                      }
                                  }
                              }},
                   nodes_[i]);
    }
}

std::vector<double> FcnModel::forward(std::span<const double> input) const {
    for (double v : input)
        if (!std::isfinite(v)) throw InputError("network input contains a non-finite value");
    fcn::ForwardCache cache;
    forward_batch(input.data(), 1, input.size(), cache);
    return cache.outputs.back();
}

void FcnModel::backward_batch(const fcn::ForwardCache& cache, const double* d_output, std::vector<double>& grad) const {
    const std::size_t B = cache.batch, L = cache.length;
    grad.assign(params_.size(), 0.0);
    std::vector<std::vector<double>> d(nodes_.size());
    for (std::size_t i = 1; i < nodes_.size(); ++i) d[i].assign(cache.outputs[i].size(), 0.0);
    std::copy(d_output, d_output + B * L, d.back().begin());
    std::vector<double> pre, tmp;

    for (std::size_t i = nodes_.size() - 1; i >= 1; --i) {
        std::visit(overloaded{[](const fcn::InputNode&) {},
                              [&](const fcn::ConvNode& c) {
                                  const auto& a = cache.outputs[i];
                                  pre.resize(a.size());
                                  for (std::size_t j = 0; j < a.size(); ++j) {
                                      const double g = d[i][j];
                                      switch (c.activation) {
                                          case Activation::Identity: pre[j] = g; break;
                                          case Activation::Tanh: pre[j] = g * (1.0 - a[j] * a[j]); break;
                                          case Activation::Sigmoid: pre[j] = g * a[j] * (1.0 - a[j]); break;
                                      }
                                  }
                                  const kernels::ConvShape s{B, c.in_ch, c.out_ch, c.kernel, L};
                                  const auto src = static_cast<std::size_t>(c.source);
                                  double* gw = grad.data() + c.offset;
                                  kernels::conv1d_backward_weights(s, cache.outputs[src].data(), pre.data(), gw,
                                                                   gw + c.weight_count());
                                  if (src == 0) return;  // no gradient needed w.r.t. the network input
                                  tmp.resize(B * c.in_ch * L);
                                  kernels::conv1d_backward_input(s, pre.data(), params_.data() + c.offset, tmp.data());
                                  auto& ds = d[src];
                                  for (std::size_t j = 0; j < tmp.size(); ++j) ds[j] += tmp[j];
                              },
                              [&](const fcn::ConcatNode& c) {
                                  const std::size_t total = channels(static_cast<int>(i));
                                  for (std::size_t n = 0; n < B; ++n) {
                                      std::size_t ch = 0;
                                      for (int s : c.sources) {
                                          const std::size_t cs = channels(s);
                                          if (s != 0) {
                                              const double* g = d[i].data() + (n * total + ch) * L;
                                              double* dst = d[static_cast<std::size_t>(s)].data() + n * cs * L;
                                              for (std::size_t j = 0; j < cs * L; ++j) dst[j] += g[j];
                                          }
                                          ch += cs;
                                      }
                                  }
                              }},
                   nodes_[i]);
    }
}

double FcnModel::loss_and_gradient(const double* x, const double* target, std::size_t batch, std::size_t length,
                                   std::vector<double>& grad, fcn::ForwardCache& cache) const {
    forward_batch(x, batch, length, cache);
    const auto& y = cache.outputs.back();
    const double scale = 1.0 / static_cast<double>(batch * length);
    std::vector<double> dy(y.size());
    double loss = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double e = y[j] - target[j];
        loss += e * e;
        dy[j] = 2.0 * e * scale;
    }
    backward_batch(cache, dy.data(), grad);
    return loss * scale;
}

nlohmann::json FcnModel::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    nlohmann::json weights = nlohmann::json::array();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::visit(overloaded{[&](const fcn::InputNode&) { nodes.push_back({{"type", "input"}}); },
                              [&](const fcn::ConvNode& c) {
                                  nodes.push_back({{"type", "conv"},
                                                   {"source", c.source},
                                                   {"kernel", c.kernel},
                                                   {"in", c.in_ch},
                                                   {"out", c.out_ch},
                                                   {"activation", ctsat::to_string(c.activation)}});
                                  const auto first = params_.begin() + static_cast<std::ptrdiff_t>(c.offset);
                                  const auto mid = first + static_cast<std::ptrdiff_t>(c.weight_count());
                                  weights.push_back({{"node", i},
                                                     {"kernel", std::vector<double>(first, mid)},
                                                     {"bias", std::vector<double>(mid, mid + static_cast<std::ptrdiff_t>(c.out_ch))}});
                              },
                              [&](const fcn::ConcatNode& c) { nodes.push_back({{"type", "concat"}, {"sources", c.sources}}); }},
                   nodes_[i]);
    }
    return {{"schema_version", kModelSchemaVersion},
            {"architecture", {{"descriptor", architecture}, {"nodes", nodes}, {"receptive_field", receptive_field()}}},
            {"seed", seed_},
            {"weights", weights},
            {"training", training_state}};
}

FcnModel FcnModel::from_json(const nlohmann::json& j) {
    FcnModel m;
    try {
        if (j.at("schema_version").get<int>() != kModelSchemaVersion)
            throw InputError("unsupported model schema_version");
        const auto& arch = j.at("architecture");
        const auto& nodes = arch.at("nodes");
        if (nodes.empty() || nodes[0].at("type") != "input") throw InputError("model graph must start with the input node");
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            const auto& n = nodes[i];
            const auto type = n.at("type").get<std::string>();
            if (type == "conv") {
                const int id = m.add_conv(n.at("source").get<int>(), n.at("kernel").get<std::size_t>(),
                                          n.at("out").get<std::size_t>(),
                                          activation_from_string(n.at("activation").get<std::string>()));
                if (m.channels(n.at("source").get<int>()) != n.at("in").get<std::size_t>())
                    throw InputError("conv node " + std::to_string(id) + " input channels disagree with its source");
            } else if (type == "concat") {
                m.add_concat(n.at("sources").get<std::vector<int>>());
            } else {
                throw InputError("unknown node type '" + type + "'");
            }
        }
        m.architecture = arch.value("descriptor", nlohmann::json::object());
        m.seed_ = j.value("seed", std::uint64_t{0});
        for (const auto& w : j.at("weights")) {
            const auto idx = w.at("node").get<std::size_t>();
            if (idx >= m.nodes_.size()) throw InputError("weight entry names a missing node");
            const auto* c = std::get_if<fcn::ConvNode>(&m.nodes_[idx]);
            if (!c) throw InputError("weight entry names a non-conv node");
            const auto k = w.at("kernel").get<std::vector<double>>();
            const auto b = w.at("bias").get<std::vector<double>>();
            if (k.size() != c->weight_count() || b.size() != c->out_ch)
                throw InputError("weight shape mismatch at node " + std::to_string(idx));
            std::copy(k.begin(), k.end(), m.params_.begin() + static_cast<std::ptrdiff_t>(c->offset));
            std::copy(b.begin(), b.end(), m.params_.begin() + static_cast<std::ptrdiff_t>(c->offset + c->weight_count()));
        }
        m.training_state = j.value("training", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("model JSON: ") + e.what());
    }
    for (double v : m.params_)
        if (!std::isfinite(v)) throw InputError("model JSON contains non-finite weights");
    m.validate();
    return m;
}

}  // namespace ctsat
