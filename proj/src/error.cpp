#include "neurodiff/error.hpp"

namespace neurodiff {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::invalid_parameter: return "invalid-parameter";
        case Errc::shape_mismatch: return "shape-mismatch";
        case Errc::degenerate_ab: return "degenerate-ab";
        case Errc::invalid_ab_ordering: return "invalid-ab-ordering";
        case Errc::indivisible_shape: return "indivisible-shape";
        case Errc::training_diverged: return "training-diverged";
        case Errc::dimension_mismatch: return "dimension-mismatch";
        case Errc::empty_dataset: return "empty-dataset";
        case Errc::bad_magic: return "bad-magic";
        case Errc::unsupported_datatype: return "unsupported-datatype";
        case Errc::truncated_file: return "truncated-file";
        case Errc::io_error: return "io-error";
        case Errc::non_orthonormal: return "non-orthonormal";
        case Errc::degenerate_spacing: return "degenerate-spacing";
        case Errc::empty_mask: return "empty-mask";
        case Errc::constant_volume: return "constant-volume";
        case Errc::size_mismatch: return "size-mismatch";
        case Errc::unknown_extractor: return "unknown-extractor";
        case Errc::insufficient_samples: return "insufficient-samples";
        case Errc::non_psd: return "non-psd";
        case Errc::empty_sample: return "empty-sample";
        case Errc::insufficient_real_data: return "insufficient-real-data";
        case Errc::empty_candidates: return "empty-candidates";
        case Errc::unreadable_weights: return "unreadable-weights";
        case Errc::missing_inputs: return "missing-inputs";
        case Errc::parse_error: return "parse-error";
    }
    return "unknown";
}

}  // namespace neurodiff
