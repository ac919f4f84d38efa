#include "adt/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace adt {

Arch arch_from_string(const std::string& s) {
  if (s == "mlp") return Arch::Mlp;
  if (s == "conv") return Arch::Conv;
  throw ConfigError("unknown arch '" + s + "' (expected mlp or conv)");
}

std::string arch_to_string(Arch arch) { return arch == Arch::Mlp ? "mlp" : "conv"; }

namespace {

struct ConvGeom {
  std::int64_t in, out, k, stride, padding;
};

// Encoder body for image inputs; BN + leaky ReLU follow every layer but the
// last.
const ConvGeom kConvChain[] = {
    {0, 32, 3, 2, 1},  // in filled from input channels
    {32, 16, 3, 2, 1},
    {16, 8, 3, 3, 1},
};

std::int64_t conv_extent(std::int64_t h, const ConvGeom& g) {
  if (h + 2 * g.padding < g.k)
    throw DimensionError("conv geometry collapses extent " + std::to_string(h));
  std::int64_t o = (h + 2 * g.padding - g.k) / g.stride + 1;
  if (o < 1) throw DimensionError("conv geometry collapses extent " + std::to_string(h));
  return o;
}

}  // namespace

std::vector<LayerSpec> encoder_spec(Arch arch, const Shape& input_shape, double slope) {
  std::vector<LayerSpec> specs;
  if (arch == Arch::Mlp) {
    if (input_shape.size() != 1)
      throw DimensionError("mlp arch expects a flat input shape, got " + shape_str(input_shape));
    specs.push_back(LayerSpec::dense(input_shape[0], 16));
    specs.push_back(LayerSpec::leaky_relu(slope));
    specs.push_back(LayerSpec::dense(16, 8));
    return specs;
  }
  if (input_shape.size() != 3)
    throw DimensionError("conv arch expects a [C,H,W] input shape, got " + shape_str(input_shape));
  std::int64_t in = input_shape[0];
  for (std::size_t i = 0; i < std::size(kConvChain); ++i) {
    ConvGeom g = kConvChain[i];
    if (i == 0) g.in = in;
    specs.push_back(LayerSpec::conv(g.in, g.out, g.k, g.stride, g.padding));
    if (i + 1 < std::size(kConvChain)) {
      specs.push_back(LayerSpec::batch_norm());
      specs.push_back(LayerSpec::leaky_relu(slope));
    }
  }
  return specs;
}

std::vector<LayerSpec> decoder_spec(Arch arch, const Shape& input_shape, double slope) {
  std::vector<LayerSpec> specs;
  if (arch == Arch::Mlp) {
    if (input_shape.size() != 1)
      throw DimensionError("mlp arch expects a flat input shape, got " + shape_str(input_shape));
    specs.push_back(LayerSpec::dense(8, 16));
    specs.push_back(LayerSpec::leaky_relu(slope));
    specs.push_back(LayerSpec::dense(16, input_shape[0]));
    return specs;
  }
  if (input_shape.size() != 3)
    throw DimensionError("conv arch expects a [C,H,W] input shape, got " + shape_str(input_shape));

  // Walk the encoder extent chain, then mirror it: each transposed conv must
  // land exactly on the extent its encoder counterpart consumed, which fixes
  // output_padding = target - ((h-1)*stride - 2*padding + k).
  constexpr std::size_t n = std::size(kConvChain);
  std::int64_t hs[n + 1], ws[n + 1];
  hs[0] = input_shape[1];
  ws[0] = input_shape[2];
  for (std::size_t i = 0; i < n; ++i) {
    hs[i + 1] = conv_extent(hs[i], kConvChain[i]);
    ws[i + 1] = conv_extent(ws[i], kConvChain[i]);
  }
  for (std::size_t i = n; i-- > 0;) {
    ConvGeom g = kConvChain[i];
    if (i == 0) g.in = input_shape[0];
    std::int64_t oph = hs[i] - ((hs[i + 1] - 1) * g.stride - 2 * g.padding + g.k);
    std::int64_t opw = ws[i] - ((ws[i + 1] - 1) * g.stride - 2 * g.padding + g.k);
    if (oph != opw || oph < 0 || oph >= g.stride)
      throw DimensionError("no transposed-conv geometry mirrors extent " +
                           std::to_string(hs[i + 1]) + " back to " + std::to_string(hs[i]));
    specs.push_back(LayerSpec::deconv(g.out, g.in, g.k, g.stride, g.padding, oph));
    if (i > 0) {
      specs.push_back(LayerSpec::batch_norm());
      specs.push_back(LayerSpec::leaky_relu(slope));
    }
  }
  specs.push_back(LayerSpec::sigmoid_out());  // reconstructions live in [0,1]
  return specs;
}

std::vector<LayerSpec> classifier_spec(std::int64_t feature_width, double dropout_p) {
  std::vector<LayerSpec> specs;
  specs.push_back(LayerSpec::dense(feature_width, 128));
  specs.push_back(LayerSpec::leaky_relu(0.0));  // plain ReLU
  specs.push_back(LayerSpec::dropout(dropout_p));
  specs.push_back(LayerSpec::dense(128, 128));
  specs.push_back(LayerSpec::leaky_relu(0.0));
  specs.push_back(LayerSpec::dropout(dropout_p));
  specs.push_back(LayerSpec::dense(128, 1));
  specs.push_back(LayerSpec::sigmoid_out());
  return specs;
}

std::vector<Tensor> ModelBundle::ae_params() const {
  std::vector<Tensor> out = encoder.params();
  for (Tensor& t : decoder.params()) out.push_back(t);
  return out;
}

std::vector<Tensor> ModelBundle::classifier_params() const { return classifier.params(); }

std::vector<Tensor> ModelBundle::all_params() const {
  std::vector<Tensor> out = ae_params();
  for (Tensor& t : classifier.params()) out.push_back(t);
  return out;
}

std::vector<NamedArray> ModelBundle::state() {
  std::vector<NamedArray> out;
  encoder.state("F", out);
  decoder.state("D", out);
  classifier.state("C", out);
  return out;
}

ModelBundle build_model(const ModelConfig& config, Rng& init_rng) {
  if (config.grl_coefficient < 0.0)
    throw ConfigError("grl coefficient must be nonnegative");
  ModelBundle b;
  b.config = config;
  b.encoder = build_stack(encoder_spec(config.arch, config.input_shape, config.leaky_slope),
                          config.input_shape, init_rng);
  b.feature_shape = b.encoder.out_shape(config.input_shape);
  b.feature_width = shape_numel(b.feature_shape);
  b.decoder = build_stack(decoder_spec(config.arch, config.input_shape, config.leaky_slope),
                          b.feature_shape, init_rng);
  Shape recon = b.decoder.out_shape(b.feature_shape);
  if (recon != config.input_shape)
    throw DimensionError("decoder output " + shape_str(recon) + " does not mirror input " +
                         shape_str(config.input_shape));
  b.classifier = build_stack(classifier_spec(b.feature_width, config.dropout_p),
                             {b.feature_width}, init_rng);
  return b;
}

std::pair<Tensor, Tensor> forward_autoencode(ModelBundle& bundle, Context& ctx, const Tensor& x) {
  Tensor features = bundle.encoder.forward(ctx, x);
  Tensor recon = bundle.decoder.forward(ctx, features);
  return {features, recon};
}

Tensor forward_domain(ModelBundle& bundle, Context& ctx, const Tensor& features) {
  Tensor flat = features.ndim() > 2 ? flatten(ctx.tape, features) : features;
  Tensor reversed = grl(ctx.tape, flat, bundle.config.grl_coefficient);
  return bundle.classifier.forward(ctx, reversed);
}

// ---- checkpointing ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'D', 'T', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t bits_of(double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  return u;
}

double double_of(std::uint64_t u) {
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("checkpoint header: bad ") + what + " '" + s + "'");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, ModelBundle& bundle, const Rng& rng) {
  std::vector<NamedArray> arrays = bundle.state();

  nlohmann::json header;
  header["format"] = 1;
  header["arch"] = arch_to_string(bundle.config.arch);
  header["input_shape"] = bundle.config.input_shape;
  header["leaky_slope"] = bundle.config.leaky_slope;
  header["dropout_p"] = bundle.config.dropout_p;
  header["grl_coefficient"] = bundle.config.grl_coefficient;
  // u64 values exceed JSON double precision, so they travel as strings.
  header["rng_seed"] = std::to_string(rng.seed());
  header["rng_counter"] = std::to_string(rng.counter());
  nlohmann::json manifest = nlohmann::json::array();
  for (const NamedArray& a : arrays)
    manifest.push_back({{"name", a.name}, {"count", a.data.size()}});
  header["tensors"] = std::move(manifest);
  std::string header_str = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  put_u64(os, header_str.size());
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const NamedArray& a : arrays)
    for (double d : a.data) put_u64(os, bits_of(d));
  os.flush();
  if (!os) throw IoError("write failed for '" + path + "'");
}

namespace {

/// Reader that tracks its offset so format errors can point at the byte
/// where parsing stopped making sense.
struct CkptReader {
  std::ifstream is;
  std::uint64_t offset = 0;
  std::string path;

  void read(void* dst, std::size_t n, const char* what) {
    is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
      throw FormatError("checkpoint '" + path + "': truncated " + what + " at byte offset " +
                        std::to_string(offset + static_cast<std::uint64_t>(is.gcount())));
    offset += n;
  }

  std::uint64_t read_u64(const char* what) {
    unsigned char buf[8];
    read(buf, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
};

}  // namespace

ModelBundle load_checkpoint(const std::string& path, Rng& rng) {
  CkptReader r;
  r.path = path;
  r.is.open(path, std::ios::binary);
  if (!r.is) throw IoError("cannot open '" + path + "'");

  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("checkpoint '" + path + "': bad magic at byte offset 0");
  std::uint64_t header_len = r.read_u64("header length");
  if (header_len > (1ull << 30))
    throw FormatError("checkpoint '" + path + "': implausible header length " +
                      std::to_string(header_len) + " at byte offset 8");
  std::string header_str(header_len, '\0');
  std::uint64_t header_at = r.offset;
  r.read(header_str.data(), header_len, "header");

  nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
  if (header.is_discarded() || !header.is_object())
    throw FormatError("checkpoint '" + path + "': header is not valid JSON (at byte offset " +
                      std::to_string(header_at) + ")");
  ModelConfig config;
  try {
    if (header.at("format").get<int>() != 1)
      throw FormatError("checkpoint '" + path + "': unsupported format version");
    config.arch = arch_from_string(header.at("arch").get<std::string>());
    config.input_shape = header.at("input_shape").get<Shape>();
    config.leaky_slope = header.at("leaky_slope").get<double>();
    config.dropout_p = header.at("dropout_p").get<double>();
    config.grl_coefficient = header.at("grl_coefficient").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path + "': header missing field (" + e.what() + ")");
  }

  Rng scratch(0);  // parameters are overwritten below
  ModelBundle bundle = build_model(config, scratch);
  std::vector<NamedArray> arrays = bundle.state();

  std::string rng_seed_str, rng_counter_str;
  try {
    const nlohmann::json& manifest = header.at("tensors");
    if (!manifest.is_array() || manifest.size() != arrays.size())
      throw FormatError("checkpoint '" + path + "': tensor manifest has " +
                        std::to_string(manifest.size()) + " entries, model needs " +
                        std::to_string(arrays.size()));
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      const nlohmann::json& entry = manifest[i];
      std::string name = entry.at("name").get<std::string>();
      std::uint64_t count = entry.at("count").get<std::uint64_t>();
      if (name != arrays[i].name || count != arrays[i].data.size())
        throw FormatError("checkpoint '" + path + "': manifest entry " + std::to_string(i) +
                          " is " + name + "[" + std::to_string(count) + "], model expects " +
                          arrays[i].name + "[" + std::to_string(arrays[i].data.size()) + "]");
    }
    rng_seed_str = header.at("rng_seed").get<std::string>();
    rng_counter_str = header.at("rng_counter").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path + "': header missing field (" + e.what() + ")");
  }
  for (NamedArray& a : arrays)
    for (double& d : a.data) d = double_of(r.read_u64("tensor payload"));

  rng.restore(parse_u64(rng_seed_str, "rng_seed"), parse_u64(rng_counter_str, "rng_counter"));
  return bundle;
}

}  // namespace adt
