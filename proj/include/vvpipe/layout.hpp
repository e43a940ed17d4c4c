#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "vvpipe/common.hpp"
#include "vvpipe/hash.hpp"

namespace vvpipe {

struct Component {
  std::string name;
  int dims = 0;
};

// Column partition of a descriptor row into named components. Immutable
// after construction and safe to share across threads.
class ComponentLayout {
 public:
  ComponentLayout() = default;

  explicit ComponentLayout(std::vector<Component> components)
      : components_(std::move(components)) {
    offsets_.reserve(components_.size());
    for (const auto& c : components_) {
      if (c.dims <= 0) {
        throw InvalidArgument("layout component '" + c.name +
                              "' must have positive dims");
      }
      if (c.name.empty() || c.name.find_first_of(" \t\n:,") != std::string::npos) {
        throw InvalidArgument("bad layout component name: '" + c.name + "'");
      }
      offsets_.push_back(total_dims_);
      total_dims_ += c.dims;
    }
    if (components_.empty()) {
      throw InvalidArgument("layout needs at least one component");
    }
  }

  // The Dense Trajectory descriptor partition: 426 dims in 5 components.
  static ComponentLayout dense_trajectory() {
    return ComponentLayout({{"traj", 30},
                            {"hog", 96},
                            {"hof", 108},
                            {"mbhx", 96},
                            {"mbhy", 96}});
  }

  int total_dims() const { return total_dims_; }
  std::size_t num_components() const { return components_.size(); }
  const std::vector<Component>& components() const { return components_; }
  const Component& component(std::size_t i) const { return components_.at(i); }
  int offset(std::size_t i) const { return offsets_.at(i); }

  // Bytes of one on-disk record (4-byte reals).
  std::uint64_t record_bytes() const {
    return static_cast<std::uint64_t>(total_dims_) * 4;
  }

  // "traj:30,hog:96,..." as carried in manifests and headers.
  std::string to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (i) out << ',';
      out << components_[i].name << ':' << components_[i].dims;
    }
    return out.str();
  }

  static ComponentLayout parse(const std::string& text) {
    std::vector<Component> comps;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw FormatError("bad layout spec: '" + text + "'");
      }
      Component c;
      c.name = item.substr(0, colon);
      try {
        c.dims = std::stoi(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw FormatError("bad layout dims in: '" + item + "'");
      }
      comps.push_back(std::move(c));
    }
    return ComponentLayout(std::move(comps));
  }

  std::uint64_t hash() const {
    ContentHash h;
    h.update(to_string());
    return h.digest();
  }

  bool operator==(const ComponentLayout& other) const {
    if (components_.size() != other.components_.size()) return false;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (components_[i].name != other.components_[i].name ||
          components_[i].dims != other.components_[i].dims) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Component> components_;
  std::vector<int> offsets_;
  int total_dims_ = 0;
};

}  // namespace vvpipe
