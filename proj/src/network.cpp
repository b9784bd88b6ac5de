#include "rpil/nn/network.hpp"

namespace rpil::nn {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline:
      return "baseline";
    case Variant::kMaxpool:
      return "maxpool";
    case Variant::kBaselineDropout:
      return "baseline_dropout";
    case Variant::kMaxpoolDropout:
      return "maxpool_dropout";
    case Variant::kTask2:
      return "task2";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::kBaseline, Variant::kMaxpool, Variant::kBaselineDropout, Variant::kMaxpoolDropout,
                 Variant::kTask2})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown network variant '" + name + "'");
}

std::vector<int> NetworkSpec::stage_widths() const {
  std::vector<int> widths{input_width};
  for (const auto& stage : stages) {
    const int w = widths.back();
    if (const auto* c = std::get_if<ConvSpec>(&stage))
      widths.push_back(window_output_width(w, c->kernel, c->stride, c->pad));
    else {
      const auto& p = std::get<PoolSpec>(stage);
      widths.push_back(window_output_width(w, p.kernel, p.stride, p.pad));
    }
  }
  return widths;
}

int NetworkSpec::flatten_channels() const {
  int ch = input_channels;
  for (const auto& stage : stages)
    if (const auto* c = std::get_if<ConvSpec>(&stage)) ch = c->out_channels;
  return ch;
}

bool NetworkSpec::has_dropout() const {
  for (const auto& d : dense)
    if (d.dropout) return true;
  return false;
}

void NetworkSpec::validate() const {
  if (input_channels < 1 || input_width < 1) throw ShapeError("network: empty input");
  int ch = input_channels;
  for (const auto& stage : stages) {
    if (const auto* c = std::get_if<ConvSpec>(&stage)) {
      if (c->in_channels != ch) throw ShapeError("network: conv input channels do not chain");
      ch = c->out_channels;
    }
  }
  stage_widths();  // throws on an impossible window
  if (dense.empty()) throw ShapeError("network: no dense layers");
  int features = dense_input_size();
  for (const auto& d : dense) {
    if (d.in != features) throw ShapeError("network: dense layer input does not chain");
    features = d.out;
  }
  if (features != 2) throw ShapeError("network: output must be two wheel speeds");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ShapeError("network: dropout p outside [0, 1)");
}

namespace {

NetworkSpec assemble(Variant v, int rays, std::array<int, 3> conv_channels, int hidden) {
  const bool pool = v == Variant::kMaxpool || v == Variant::kMaxpoolDropout || v == Variant::kTask2;
  const bool dropout = v == Variant::kBaselineDropout || v == Variant::kMaxpoolDropout || v == Variant::kTask2;

  NetworkSpec s;
  s.variant = v;
  s.input_width = rays;
  s.goal_input = v == Variant::kTask2;
  s.stages.push_back(ConvSpec{4, conv_channels[0], 5, 2, 2});
  s.stages.push_back(ConvSpec{conv_channels[0], conv_channels[1], 5, 2, 2});
  if (pool) s.stages.push_back(PoolSpec{3, 3, 1});
  s.stages.push_back(ConvSpec{conv_channels[1], conv_channels[2], 5, 1, 2});
  const int in = s.dense_input_size();
  s.dense = {{in, hidden, true, dropout}, {hidden, hidden, true, dropout}, {hidden, 2, false, false}};
  s.validate();
  return s;
}

}  // namespace

NetworkSpec NetworkSpec::make(Variant v, int rays) {
  const bool pool = v == Variant::kMaxpool || v == Variant::kMaxpoolDropout || v == Variant::kTask2;
  return pool ? assemble(v, rays, {32, 96, 96}, 128) : assemble(v, rays, {16, 32, 32}, 128);
}

NetworkSpec NetworkSpec::shrunken(Variant v) {
  const bool pool = v == Variant::kMaxpool || v == Variant::kMaxpoolDropout || v == Variant::kTask2;
  return pool ? assemble(v, 8, {2, 4, 3}, 6) : assemble(v, 8, {2, 3, 3}, 6);
}

std::vector<SampleRef> index_samples(const std::vector<RunRecord>& runs) {
  std::vector<SampleRef> refs;
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (int k = 0; k < runs[r].size(); ++k) refs.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(k)});
  return refs;
}

}  // namespace rpil::nn
