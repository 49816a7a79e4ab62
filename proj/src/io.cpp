#include "ddl/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "ddl/errors.hpp"

#ifndef DDL_VERSION
#define DDL_VERSION "dev"
#endif

namespace ddl {

std::string tool_version() { return DDL_VERSION; }

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void format_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  if (s.empty()) throw FormatError("dataset csv: empty field on line " + std::to_string(line));
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw FormatError("dataset csv: bad number \"" + s + "\" on line " + std::to_string(line));
  }
  return v;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown field \"" + key + "\"");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json pairs_json(const std::vector<LatentPair>& pairs) {
  json a = json::array();
  for (const auto& p : pairs) a.push_back({p.i, p.j});
  return a;
}

json r2_json(const std::optional<R2Value>& v) {
  if (!v) return nullptr;
  return {{"reported", v->reported}, {"raw", v->raw}, {"warnings", v->warnings}};
}

json mcc_json(const MccResult& m) {
  return {{"score", m.score}, {"permutation", m.permutation}, {"method", corr_method_name(m.method)},
          {"warnings", m.warnings}};
}

}  // namespace

std::string dataset_to_csv(const Dataset& ds) {
  std::string out;
  const auto dz = ds.z.cols();
  const auto dx = ds.x.cols();
  for (Eigen::Index c = 0; c < dz; ++c) out += (c ? ",z_" : "z_") + std::to_string(c + 1);
  for (Eigen::Index c = 0; c < dx; ++c) out += ",x_" + std::to_string(c + 1);
  out += '\n';
  out.reserve(out.size() + static_cast<std::size_t>(ds.z.rows() * (dz + dx)) * 24);
  for (Eigen::Index r = 0; r < ds.z.rows(); ++r) {
    for (Eigen::Index c = 0; c < dz; ++c) {
      if (c) out += ',';
      format_double(out, ds.z(r, c));
    }
    for (Eigen::Index c = 0; c < dx; ++c) {
      out += ',';
      format_double(out, ds.x(r, c));
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset csv: missing header");
  const auto header = split(line, ',');
  std::size_t dz = 0;
  while (dz < header.size() && header[dz] == "z_" + std::to_string(dz + 1)) ++dz;
  std::size_t dx = 0;
  while (dz + dx < header.size() && header[dz + dx] == "x_" + std::to_string(dx + 1)) ++dx;
  if (dz == 0 || dx == 0 || dz + dx != header.size()) {
    throw FormatError("dataset csv: header must be z_1..z_dz,x_1..x_dx");
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line, ',');
    if (fields.size() != dz + dx) {
      throw FormatError("dataset csv: line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(dz + dx));
    }
    std::vector<double> vals(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) vals[c] = parse_double(fields[c], lineno);
    rows.push_back(std::move(vals));
  }
  Dataset ds;
  ds.z.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dz));
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dx));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < dz; ++c) ds.z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    for (std::size_t c = 0; c < dx; ++c) ds.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][dz + c];
  }
  return ds;
}

json net_to_json(const NetParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"rows", l.weight.rows()}, {"cols", l.weight.cols()}, {"weight", w}, {"bias", b}});
  }
  return {{"slope", p.slope}, {"layers", layers}};
}

NetParams net_from_json(const json& j) {
  try {
    NetParams p;
    p.slope = j.at("slope").get<double>();
    for (const auto& l : j.at("layers")) {
      const auto rows = l.at("rows").get<Eigen::Index>();
      const auto cols = l.at("cols").get<Eigen::Index>();
      const auto w = l.at("weight").get<std::vector<double>>();
      const auto b = l.at("bias").get<std::vector<double>>();
      if (rows <= 0 || cols <= 0 || w.size() != static_cast<std::size_t>(rows * cols) ||
          b.size() != static_cast<std::size_t>(rows)) {
        throw FormatError("network json: layer shape mismatch");
      }
      Layer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = b[static_cast<std::size_t>(r)];
      p.layers.push_back(std::move(layer));
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("network json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("network json: ") + e.what());
  }
}

json support_to_json(const SupportMatrix& s) {
  std::vector<std::string> rows;
  for (const auto& r : s.rows()) {
    std::string line;
    for (std::size_t j = 0; j < s.d_z(); ++j) line += r.contains(j) ? '1' : '0';
    rows.push_back(line);
  }
  return {{"d_x", s.d_x()}, {"d_z", s.d_z()}, {"rows", rows}};
}

SupportMatrix support_from_json(const json& j, bool relaxed) {
  try {
    const auto dx = j.at("d_x").get<std::size_t>();
    const auto dz = j.at("d_z").get<std::size_t>();
    std::string text = std::to_string(dx) + " " + std::to_string(dz) + "\n";
    for (const auto& r : j.at("rows")) text += r.get<std::string>() + "\n";
    if (!relaxed) return SupportMatrix::from_text(text);
    std::vector<IndexSet> rows;
    for (const auto& r : j.at("rows")) {
      const auto line = r.get<std::string>();
      if (line.size() != dz) throw FormatError("support json: row length mismatch");
      IndexSet s;
      for (std::size_t c = 0; c < line.size(); ++c) {
        if (line[c] == '1') s.insert(c);
        else if (line[c] != '0') throw FormatError("support json: invalid character");
      }
      rows.push_back(s);
    }
    return SupportMatrix::relaxed(dx, dz, std::move(rows));
  } catch (const json::exception& e) {
    throw FormatError(std::string("support json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("support json: ") + e.what());
  }
}

json model_to_json(const GroundTruthModel& m) {
  json prior = {{"kind", m.prior.kind == PriorKind::StandardNormal ? "standard_normal" : "correlated_normal"}};
  if (m.prior.kind == PriorKind::CorrelatedNormal) {
    json cov = json::array();
    for (Eigen::Index r = 0; r < m.prior.covariance.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < m.prior.covariance.cols(); ++c) row.push_back(m.prior.covariance(r, c));
      cov.push_back(row);
    }
    prior["covariance"] = cov;
  }
  json outputs = json::array();
  for (const auto& o : m.outputs) outputs.push_back(net_to_json(o));
  return {{"format", "ddl-model"},
          {"version", tool_version()},
          {"support", support_to_json(m.support)},
          {"architecture", {{"depth", m.arch.depth}, {"width", m.arch.width}}},
          {"slope", m.arch.slope},
          {"prior", prior},
          {"outputs", outputs},
          {"seed", m.seed},
          {"attempts", m.attempts},
          {"probe_min_singular", m.probe_min_singular}};
}

GroundTruthModel model_from_json(const json& j) {
  try {
    if (j.value("format", "") != "ddl-model") throw FormatError("model json: missing format tag \"ddl-model\"");
    GroundTruthModel m{support_from_json(j.at("support")), {}, {}, {}, 0, 1, 0.0};
    m.arch.depth = j.at("architecture").at("depth").get<std::size_t>();
    m.arch.width = j.at("architecture").at("width").get<std::size_t>();
    m.arch.slope = j.at("slope").get<double>();
    const auto kind = j.at("prior").at("kind").get<std::string>();
    if (kind == "standard_normal") {
      m.prior.kind = PriorKind::StandardNormal;
    } else if (kind == "correlated_normal") {
      m.prior.kind = PriorKind::CorrelatedNormal;
      const auto rows = j.at("prior").at("covariance").get<std::vector<std::vector<double>>>();
      m.prior.covariance.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.size()) throw FormatError("model json: covariance must be square");
        for (std::size_t c = 0; c < rows.size(); ++c)
          m.prior.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    } else {
      throw FormatError("model json: unknown prior kind \"" + kind + "\"");
    }
    for (const auto& o : j.at("outputs")) m.outputs.push_back(net_from_json(o));
    if (m.outputs.size() != m.support.d_x()) throw FormatError("model json: one network per observed variable expected");
    for (std::size_t i = 0; i < m.outputs.size(); ++i) {
      if (m.outputs[i].in_dim() != m.support.row(i).size() || m.outputs[i].out_dim() != 1) {
        throw FormatError("model json: network " + std::to_string(i) + " does not match its support row");
      }
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.attempts = j.at("attempts").get<std::size_t>();
    m.probe_min_singular = j.at("probe_min_singular").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model json: ") + e.what());
  }
}

json estimator_config_to_json(const EstimatorConfig& c) {
  return {{"mode", mode_name(c.mode)},
          {"d_z", c.d_z},
          {"encoder", {{"depth", c.encoder.depth}, {"width", c.encoder.width}}},
          {"decoder", {{"depth", c.decoder.depth}, {"width", c.decoder.width}}},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"tau", c.tau},
          {"penalty", penalty_name(c.penalty)},
          {"penalty_eps", c.penalty_eps},
          {"support_slice", c.support_slice},
          {"slope", c.slope},
          {"recon", recon_name(c.recon)},
          {"decoder_layout", layout_name(c.decoder_layout)}};
}

EstimatorConfig estimator_config_from_json(const json& j) {
  const std::string where = "estimator";
  check_keys(j, {"mode", "d_z", "encoder", "decoder", "alpha", "beta", "epochs", "batch_size", "learning_rate", "seed",
                 "tau", "penalty", "penalty_eps", "support_slice", "slope", "recon", "decoder_layout"},
             where);
  EstimatorConfig c;
  std::string mode = mode_name(c.mode);
  std::string penalty = penalty_name(c.penalty);
  read_opt(j, "mode", mode, where);
  read_opt(j, "d_z", c.d_z, where);
  for (auto [key, arch] : {std::pair{"encoder", &c.encoder}, std::pair{"decoder", &c.decoder}}) {
    if (!j.contains(key)) continue;
    const std::string sub = where + "." + key;
    check_keys(j.at(key), {"depth", "width"}, sub);
    read_opt(j.at(key), "depth", arch->depth, sub);
    read_opt(j.at(key), "width", arch->width, sub);
  }
  read_opt(j, "alpha", c.alpha, where);
  read_opt(j, "beta", c.beta, where);
  read_opt(j, "epochs", c.epochs, where);
  read_opt(j, "batch_size", c.batch_size, where);
  read_opt(j, "learning_rate", c.learning_rate, where);
  read_opt(j, "seed", c.seed, where);
  read_opt(j, "tau", c.tau, where);
  read_opt(j, "penalty", penalty, where);
  read_opt(j, "penalty_eps", c.penalty_eps, where);
  read_opt(j, "support_slice", c.support_slice, where);
  read_opt(j, "slope", c.slope, where);
  std::string recon = recon_name(c.recon);
  read_opt(j, "recon", recon, where);
  std::string layout = layout_name(c.decoder_layout);
  read_opt(j, "decoder_layout", layout, where);
  try {
    c.decoder_layout = layout_from_name(layout);
    c.recon = recon_from_name(recon);
    c.mode = mode_from_name(mode);
    c.penalty = penalty_from_name(penalty);
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json estimator_to_json(const TrainedEstimator& e) {
  json hist = json::array();
  for (const auto& h : e.history) {
    hist.push_back({{"total", h.total}, {"recon", h.recon}, {"kl", h.kl}, {"penalty", h.penalty}});
  }
  return {{"format", "ddl-estimator"},
          {"version", tool_version()},
          {"config", estimator_config_to_json(e.config)},
          {"encoder", net_to_json(e.encoder)},
          {"decoder", net_to_json(e.decoder)},
          {"history", hist},
          {"empirical_support", support_to_json(e.empirical_support)}};
}

TrainedEstimator estimator_from_json(const json& j) {
  try {
    if (j.value("format", "") != "ddl-estimator") throw FormatError("estimator json: missing format tag");
    TrainedEstimator e;
    try {
      e.config = estimator_config_from_json(j.at("config"));
    } catch (const ConfigError& err) {
      throw FormatError(std::string("estimator json: ") + err.what());
    }
    e.encoder = net_from_json(j.at("encoder"));
    e.decoder = net_from_json(j.at("decoder"));
    for (const auto& h : j.at("history")) {
      e.history.push_back({h.at("total").get<double>(), h.at("recon").get<double>(), h.at("kl").get<double>(),
                           h.at("penalty").get<double>()});
    }
    e.empirical_support = support_from_json(j.at("empirical_support"), true);
    const std::size_t enc_out = e.config.mode == EstimatorMode::VAE ? 2 * e.config.d_z : e.config.d_z;
    if (e.encoder.out_dim() != enc_out || e.decoder.in_dim() != e.config.d_z || e.decoder.out_dim() != e.encoder.in_dim()) {
      throw FormatError("estimator json: network shapes do not match the config");
    }
    return e;
  } catch (const json::exception& err) {
    throw FormatError(std::string("estimator json: ") + err.what());
  }
}

std::string train_log_csv(const std::vector<LossComponents>& history) {
  std::string out = "epoch,total,recon,kl,penalty\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    out += std::to_string(e + 1);
    for (double v : {history[e].total, history[e].recon, history[e].kl, history[e].penalty}) {
      out += ',';
      format_double(out, v);
    }
    out += '\n';
  }
  return out;
}

json region_to_json(const AtomicRegion& r) {
  return {{"signature", r.signature}, {"members", r.members.members()}, {"outside_all_sets", r.outside()}};
}

json certificate_to_json(const Certificate& c) {
  json steps = json::array();
  for (const auto& s : c.steps) {
    steps.push_back({{"K", s.k.members()}, {"V", s.v.members()}, {"clause", clause_name(s.clause)},
                     {"covered", pairs_json(s.covered)}});
  }
  return {{"region", region_to_json(c.region)}, {"certified", true}, {"steps", steps}};
}

json certify_result_to_json(const CertifyResult& r) {
  if (const auto* c = std::get_if<Certificate>(&r)) return certificate_to_json(*c);
  const auto& f = std::get<CertificateFailure>(r);
  return {{"region", region_to_json(f.region)}, {"certified", false}, {"uncovered", pairs_json(f.uncovered)}};
}

json diversity_to_json(const std::vector<DiversityVerdict>& v) {
  json a = json::array();
  for (const auto& d : v) {
    json o = {{"latent", d.latent}, {"satisfied", d.satisfied}};
    o["clause"] = d.satisfied ? json(static_cast<int>(d.clause)) : json("none");
    if (d.satisfied) {
      o["witness"] = d.witness.members();
      o["distinguished"] = d.distinguished ? json(*d.distinguished) : json(nullptr);
    }
    a.push_back(o);
  }
  return a;
}

json nonlinearity_to_json(const std::vector<NonlinearityVerdict>& v) {
  json a = json::array();
  for (const auto& n : v) {
    a.push_back({{"row", n.row}, {"achieved_rank", n.achieved}, {"required_rank", n.required}, {"pass", n.pass}});
  }
  return a;
}

json split_to_json(const ObsSplit& s) { return {{"K", s.k.members()}, {"V", s.v.members()}}; }

ObsSplit split_from_json(const json& j) {
  check_keys(j, {"K", "V"}, "split");
  try {
    ObsSplit s{ObsSet::from_members(j.at("K").get<std::vector<std::size_t>>()),
               ObsSet::from_members(j.at("V").get<std::vector<std::size_t>>())};
    if (s.k.empty() || s.v.empty()) throw ConfigError("split: K and V must be nonempty");
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("split: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(std::string("split: ") + e.what());
  }
}

json report_to_json(const EvaluationReport& r) {
  json r2 = json::array();
  for (const auto& s : r.r2) {
    r2.push_back({{"split", split_to_json(s.split)},
                  {"I_K", s.ik.members()},
                  {"I_V", s.iv.members()},
                  {"Int", r2_json(s.intersection)},
                  {"SymDiff", r2_json(s.symdiff)},
                  {"CompA", r2_json(s.comp_a)},
                  {"CompB", r2_json(s.comp_b)},
                  {"Ref", r2_json(s.ref)}});
  }
  const auto& o = r.options;
  return {{"format", "ddl-report"},
          {"version", tool_version()},
          {"mcc", mcc_json(r.mcc_spearman)},
          {"mcc_pearson", mcc_json(r.mcc_pearson)},
          {"shd", r.structure.shd},
          {"structure_permutation", r.structure.permutation},
          {"empirical_support", support_to_json(r.empirical_support)},
          {"r2", r2},
          {"assumptions",
           {{"diversity", diversity_to_json(r.diversity)},
            {"element_identifiability_predicted", r.element_identifiability_predicted},
            {"nonlinearity", nonlinearity_to_json(r.nonlinearity)},
            {"nonlinearity_estimated_support_clause", "not verifiable before training; not checked"}}},
          {"hyperparameters",
           {{"r2_regressor", "kernel ridge, RBF kernel, median-distance bandwidth on standardized predictors"},
            {"r2_ridge", o.r2.ridge},
            {"r2_train_fraction", o.r2.train_fraction},
            {"r2_max_fit", o.r2.max_fit},
            {"r2_max_test", o.r2.max_test},
            {"r2_bandwidth_sample", o.r2.bandwidth_sample},
            {"r2_seed", o.r2.seed},
            {"rank_tol", o.rank_tol},
            {"nonlinearity_samples", o.nonlinearity_samples}}},
          {"conventions",
           {{"latent_alignment", "R2 groups aligned by the spearman-abs MCC assignment"},
            {"indices", "0-based"}}}};
}

}  // namespace ddl
