#include "ccm/model/modality.hpp"

#include "ccm/error.hpp"

#include <bit>

namespace ccm::model {

std::string_view name(Modality m)
{
    switch (m) {
    case Modality::rgb:
        return "rgb";
    case Modality::depth:
        return "depth";
    case Modality::force:
        return "force";
    case Modality::proprio:
        return "proprio";
    }
    throw ContractError("unknown modality id " + std::to_string(static_cast<int>(m)));
}

Modality parse_modality(std::string_view text)
{
    if (text == "rgb" || text == "image") {
        return Modality::rgb;
    }
    if (text == "depth") {
        return Modality::depth;
    }
    if (text == "force") {
        return Modality::force;
    }
    if (text == "proprio") {
        return Modality::proprio;
    }
    throw ContractError("unknown modality '" + std::string(text) + "'");
}

std::size_t ModalitySet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::string ModalitySet::to_string() const
{
    std::string out = "{";
    for (auto m : kModalities) {
        if (contains(m)) {
            if (out.size() > 1) {
                out += ',';
            }
            out += name(m);
        }
    }
    return out + "}";
}

} // namespace ccm::model
