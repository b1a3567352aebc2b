#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace groundlab::lex {

// Object categories. Each category has a preferred room type (index into
// kRooms); environment generation places objects in their preferred room with
// a configurable probability, so room words correlate with what is nearby.
inline const std::vector<std::string> kCategories = {
    "mug",    "kettle", "lamp",  "chair",  "sofa",   "plant",  "vase",
    "clock",  "book",   "towel", "pillow", "mirror", "basket", "radio",
};

inline const std::vector<int> kCategoryRoomAffinity = {
    0,  // mug -> kitchen
    0,  // kettle -> kitchen
    3,  // lamp -> office
    3,  // chair -> office
    5,  // sofa -> lounge
    5,  // plant -> lounge
    5,  // vase -> lounge
    4,  // clock -> hallway
    3,  // book -> office
    1,  // towel -> bathroom
    2,  // pillow -> bedroom
    1,  // mirror -> bathroom
    6,  // basket -> pantry
    7,  // radio -> garage
};

inline const std::vector<std::string> kColors = {
    "red", "blue", "green", "yellow", "white", "black", "brown", "purple",
};

inline const std::vector<std::string> kSizes = {"small", "large", "tiny"};

inline const std::vector<std::string> kMaterials = {"wooden", "metal", "plastic", "glass"};

inline const std::vector<std::string> kRooms = {
    "kitchen", "bathroom", "bedroom", "office", "hallway", "lounge", "pantry", "garage",
};

inline std::size_t num_categories() { return kCategories.size(); }
inline std::size_t num_colors() { return kColors.size(); }
inline std::size_t num_sizes() { return kSizes.size(); }
inline std::size_t num_materials() { return kMaterials.size(); }
inline std::size_t num_rooms() { return kRooms.size(); }

// Width of the concatenated one-hot attribute encoding used as the region
// feature space.
inline std::size_t feature_dim() {
    return num_categories() + num_colors() + num_sizes() + num_materials();
}

}  // namespace groundlab::lex
