#include "ccm/config.hpp"

#include "ccm/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace ccm {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> items;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            items.push_back(item);
        }
    }
    return items;
}

double to_double(const std::string& key, const std::string& s)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "': not a number: '" + s + "'");
    }
    if (used != s.size()) {
        throw ContractError("config key '" + key + "': trailing characters in '" + s + "'");
    }
    return v;
}

std::int64_t to_int(const std::string& key, const std::string& s)
{
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ContractError("config key '" + key + "': not an integer: '" + s + "'");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& s)
{
    if (s == "true" || s == "1") {
        return true;
    }
    if (s == "false" || s == "0") {
        return false;
    }
    throw ContractError("config key '" + key + "': not a boolean: '" + s + "'");
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

struct Field {
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

using Registry = std::map<std::string, Field>;

void reg_double(Registry& r, const std::string& key, double& ref)
{
    r[key] = {[&ref] { return fmt(ref); }, [&ref, key](const std::string& s) { ref = to_double(key, s); }};
}

template <class Int>
void reg_int(Registry& r, const std::string& key, Int& ref)
{
    r[key] = {[&ref] { return std::to_string(ref); },
              [&ref, key](const std::string& s) {
                  const auto v = to_int(key, s);
                  if constexpr (std::is_unsigned_v<Int>) {
                      if (v < 0) {
                          throw ContractError("config key '" + key + "' must be non-negative");
                      }
                  }
                  ref = static_cast<Int>(v);
              }};
}

void reg_bool(Registry& r, const std::string& key, bool& ref)
{
    r[key] = {[&ref] { return std::string(ref ? "true" : "false"); },
              [&ref, key](const std::string& s) { ref = to_bool(key, s); }};
}

template <class Seq>
void reg_doubles(Registry& r, const std::string& key, Seq& ref)
{
    r[key] = {[&ref] {
                  std::string out;
                  for (std::size_t i = 0; i < ref.size(); ++i) {
                      out += (i ? ", " : "") + fmt(ref[i]);
                  }
                  return out;
              },
              [&ref, key](const std::string& s) {
                  const auto items = split_list(s);
                  if constexpr (std::is_same_v<Seq, std::vector<double>>) {
                      ref.clear();
                      for (const auto& it : items) {
                          ref.push_back(to_double(key, it));
                      }
                  } else {
                      if (items.size() != ref.size()) {
                          throw ContractError("config key '" + key + "' expects " +
                                              std::to_string(ref.size()) + " values");
                      }
                      for (std::size_t i = 0; i < items.size(); ++i) {
                          ref[i] = to_double(key, items[i]);
                      }
                  }
              }};
}

void reg_sizes(Registry& r, const std::string& key, std::vector<std::size_t>& ref)
{
    r[key] = {[&ref] {
                  std::string out;
                  for (std::size_t i = 0; i < ref.size(); ++i) {
                      out += (i ? ", " : "") + std::to_string(ref[i]);
                  }
                  return out;
              },
              [&ref, key](const std::string& s) {
                  ref.clear();
                  for (const auto& it : split_list(s)) {
                      const auto v = to_int(key, it);
                      if (v <= 0) {
                          throw ContractError("config key '" + key + "': layer sizes must be positive");
                      }
                      ref.push_back(static_cast<std::size_t>(v));
                  }
              }};
}

Registry registry(Config& c)
{
    Registry r;
    reg_double(r, "sim.z_table", c.sim.z_table);
    reg_double(r, "sim.hole_half_width", c.sim.hole_half_width);
    reg_double(r, "sim.peg_half_width", c.sim.peg_half_width);
    reg_double(r, "sim.max_action", c.sim.max_action);
    reg_double(r, "sim.contact_stiffness", c.sim.contact_stiffness);
    reg_double(r, "sim.friction_gain", c.sim.friction_gain);
    reg_double(r, "sim.force_noise_std", c.sim.force_noise_std);
    reg_double(r, "sim.torque_noise_std", c.sim.torque_noise_std);
    reg_doubles(r, "sim.sensor_offset", c.sim.sensor_offset);
    reg_int(r, "sim.horizon", c.sim.horizon);
    reg_double(r, "sim.success_depth", c.sim.success_depth);
    reg_double(r, "sim.success_tolerance", c.sim.success_tolerance);
    reg_double(r, "sim.depth_far", c.sim.depth_far);

    reg_int(r, "data.n_train", c.data.n_train);
    reg_int(r, "data.n_val", c.data.n_val);
    reg_int(r, "data.n_test", c.data.n_test);
    reg_int(r, "data.seed", c.data.seed);
    reg_double(r, "data.expert_noise", c.data.expert_noise);
    reg_double(r, "data.unpaired_min_distance", c.data.unpaired_min_distance);
    reg_int(r, "data.unpaired_max_draws", c.data.unpaired_max_draws);

    reg_int(r, "model.latent_dim", c.model.latent_dim);
    reg_sizes(r, "model.encoder_hidden", c.model.encoder_hidden);
    reg_sizes(r, "model.decoder_hidden", c.model.decoder_hidden);
    reg_sizes(r, "model.flow_hidden", c.model.flow_hidden);
    reg_sizes(r, "model.head_hidden", c.model.head_hidden);
    reg_double(r, "model.logvar_min", c.model.logvar_min);
    reg_double(r, "model.logvar_max", c.model.logvar_max);
    reg_bool(r, "model.standardize_rgb", c.model.standardize_rgb);
    reg_bool(r, "model.standardize_depth", c.model.standardize_depth);
    reg_double(r, "model.rgb_std_floor", c.model.rgb_std_floor);
    reg_double(r, "model.depth_std_floor", c.model.depth_std_floor);
    reg_int(r, "model.seed", c.model.seed);

    reg_double(r, "loss.flow", c.loss.flow);
    reg_double(r, "loss.flow_mask", c.loss.flow_mask);
    reg_double(r, "loss.ee_pos", c.loss.ee_pos);
    reg_double(r, "loss.next_contact", c.loss.next_contact);
    reg_double(r, "loss.pairing", c.loss.pairing);
    reg_double(r, "loss.kl", c.loss.kl);
    reg_double(r, "loss.recon", c.loss.recon);
    reg_double(r, "loss.recon_mask", c.loss.recon_mask);
    reg_double(r, "loss.latent_dist", c.loss.latent_dist);
    reg_double(r, "loss.recon_l1", c.loss.recon_l1);

    reg_double(r, "train.lr", c.train.lr);
    reg_double(r, "train.beta1", c.train.beta1);
    reg_double(r, "train.beta2", c.train.beta2);
    reg_double(r, "train.eps", c.train.eps);
    reg_int(r, "train.batch", c.train.batch);
    reg_int(r, "train.epochs", c.train.epochs);
    reg_int(r, "train.seed", c.train.seed);
    reg_double(r, "train.drop_rate", c.train.drop_rate);
    reg_double(r, "train.pairing_rate", c.train.pairing_rate);
    reg_bool(r, "train.detach_full_target", c.train.detach_full_target);
    reg_bool(r, "train.contact_balance", c.train.contact_balance);
    reg_bool(r, "train.no_latent_dist", c.train.ablation.no_latent_dist);
    reg_bool(r, "train.recon_only", c.train.ablation.recon_only);
    reg_bool(r, "train.ss_only", c.train.ablation.ss_only);
    reg_bool(r, "train.zero_force", c.train.ablation.zero_force);

    reg_int(r, "corruption.box_min", c.corruption.box_min);
    reg_int(r, "corruption.box_max", c.corruption.box_max);
    reg_int(r, "corruption.box_jitter", c.corruption.box_jitter);
    reg_double(r, "corruption.brightness_min", c.corruption.brightness_min);
    reg_double(r, "corruption.brightness_max", c.corruption.brightness_max);
    reg_double(r, "corruption.rotation_min_deg", c.corruption.rotation_min_deg);
    reg_double(r, "corruption.rotation_max_deg", c.corruption.rotation_max_deg);
    reg_int(r, "corruption.blackout_steps", c.corruption.blackout_steps);
    reg_doubles(r, "corruption.noise_vars", c.corruption.noise_vars);
    reg_int(r, "corruption.calibration_seed", c.corruption.calibration_seed);

    reg_sizes(r, "policy.hidden", c.policy.hidden);
    reg_double(r, "policy.lr", c.policy.lr);
    reg_int(r, "policy.epochs", c.policy.epochs);
    reg_int(r, "policy.batch", c.policy.batch);
    reg_int(r, "policy.seed", c.policy.seed);
    reg_double(r, "policy.log_std_min", c.policy.log_std_min);
    reg_double(r, "policy.log_std_max", c.policy.log_std_max);

    reg_int(r, "eval.episodes", c.eval.episodes);
    reg_int(r, "eval.seed", c.eval.seed);
    return r;
}

} // namespace

Config Config::parse(const std::string& text)
{
    Config c;
    auto reg = registry(c);
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ContractError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        auto it = reg.find(key);
        if (it == reg.end()) {
            throw ContractError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        it->second.set(value);
    }
    c.validate();
    return c;
}

Config Config::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ContractError("cannot read config file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string Config::dump() const
{
    auto copy = *this;
    const auto reg = registry(copy);
    std::string out;
    for (const auto& [key, field] : reg) {
        out += key + " = " + field.get() + "\n";
    }
    return out;
}

std::string Config::hash() const
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void Config::validate() const
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ContractError("invalid config: " + what);
        }
    };
    require(data.n_train > 0 && data.n_val > 0 && data.n_test > 0, "split sizes must be positive");
    require(sim.horizon > 0 && sim.horizon <= 200, "sim.horizon must be in (0, 200]");
    require(sim.peg_half_width < sim.hole_half_width, "peg must be narrower than the hole");
    require(model.latent_dim > 0, "model.latent_dim must be positive");
    require(train.batch > 0 && train.epochs >= 0, "train.batch/epochs");
    require(train.drop_rate >= 0.0 && train.drop_rate <= 1.0, "train.drop_rate must be in [0,1]");
    require(train.pairing_rate >= 0.0 && train.pairing_rate <= 1.0, "train.pairing_rate must be in [0,1]");
    for (double w : {loss.flow, loss.flow_mask, loss.ee_pos, loss.next_contact, loss.pairing, loss.kl,
                     loss.recon, loss.recon_mask, loss.latent_dist, loss.recon_l1}) {
        require(w >= 0.0, "loss weights must be >= 0");
    }
    require(corruption.box_min > 0 && corruption.box_min <= corruption.box_max, "corruption box range");
    require(corruption.brightness_min <= corruption.brightness_max, "corruption brightness range");
    require(corruption.rotation_min_deg <= corruption.rotation_max_deg, "corruption rotation range");
    require(!corruption.noise_vars.empty(), "corruption.noise_vars must not be empty");
    for (double v : corruption.noise_vars) {
        require(v > 0.0, "corruption.noise_vars must be positive");
    }
    require(policy.log_std_min < policy.log_std_max, "policy log-std bounds");
    require(policy.batch > 0 && policy.epochs >= 0, "policy.batch/epochs");
    require(eval.episodes > 0, "eval.episodes must be positive");
}

LossWeights effective_weights(const LossWeights& weights, const AblationFlags& flags)
{
    LossWeights w = weights;
    if (flags.no_latent_dist) {
        w.latent_dist = 0.0;
    }
    if (flags.recon_only) {
        w.flow = w.flow_mask = w.ee_pos = w.next_contact = w.pairing = 0.0;
    }
    if (flags.ss_only) {
        w.recon = w.recon_mask = 0.0;
    }
    return w;
}

} // namespace ccm
