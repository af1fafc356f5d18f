#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace ccm::model {

enum class Modality : std::uint8_t { rgb = 0, depth = 1, force = 2, proprio = 3 };

/// Canonical order; fusion always visits experts in this order.
inline constexpr std::array<Modality, 4> kModalities{Modality::rgb, Modality::depth, Modality::force,
                                                     Modality::proprio};
/// Modalities that may be dropped or corrupted. Proprioception is always present.
inline constexpr std::array<Modality, 3> kDroppable{Modality::rgb, Modality::depth, Modality::force};

std::string_view name(Modality m);
/// Accepts "rgb", "image", "depth", "force", "proprio".
Modality parse_modality(std::string_view text);

class ModalitySet {
public:
    constexpr ModalitySet() = default;
    static constexpr ModalitySet all() { return ModalitySet(0b1111); }
    static constexpr ModalitySet all_but(Modality m) { return ModalitySet(0b1111 & ~bit(m)); }

    constexpr bool contains(Modality m) const { return (bits_ & bit(m)) != 0; }
    constexpr void insert(Modality m) { bits_ |= bit(m); }
    constexpr void erase(Modality m) { bits_ &= ~bit(m); }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint8_t bits() const { return bits_; }
    std::size_t size() const;
    /// e.g. "{depth,force,proprio}"
    std::string to_string() const;

    friend constexpr bool operator==(ModalitySet a, ModalitySet b) { return a.bits_ == b.bits_; }

private:
    constexpr explicit ModalitySet(std::uint8_t bits) : bits_(bits) {}
    static constexpr std::uint8_t bit(Modality m) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(m)); }
    std::uint8_t bits_ = 0;
};

} // namespace ccm::model
