#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neurodiff {

enum class Errc {
    invalid_parameter,
    shape_mismatch,
    degenerate_ab,
    invalid_ab_ordering,
    indivisible_shape,
    training_diverged,
    dimension_mismatch,
    empty_dataset,
    bad_magic,
    unsupported_datatype,
    truncated_file,
    io_error,
    non_orthonormal,
    degenerate_spacing,
    empty_mask,
    constant_volume,
    size_mismatch,
    unknown_extractor,
    insufficient_samples,
    non_psd,
    empty_sample,
    insufficient_real_data,
    empty_candidates,
    unreadable_weights,
    missing_inputs,
    parse_error,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), m_code(code) {}

    Errc code() const noexcept { return m_code; }

private:
    Errc m_code;
};

}  // namespace neurodiff
