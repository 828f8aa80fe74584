#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xeroalign/graph.hpp"
#include "xeroalign/rng.hpp"
#include "xeroalign/tensor.hpp"

namespace xeroalign::testing {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double scale = 1.0);

// Scratch directory under the build tree, emptied on creation.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);

// Generates a small dataset from the default spec with the given sizes.
std::filesystem::path small_dataset(const std::string& name, std::size_t train, std::size_t dev, std::size_t test,
                                    const std::string& extra = "");

}  // namespace xeroalign::testing
