#pragma once

#include <filesystem>
#include <variant>

#include "dtwin/grid.hpp"

namespace dtwin {

// NIfTI-1 single-file (.nii) reader/writer. Uncompressed, little-endian,
// axis-aligned geometry only.
//
// Layout written by this module:
//   scalar grids   dim = [3, nx, ny, nz, 1, 1, 1, 1], float32
//   label masks    dim = [3, nx, ny, nz, ...], uint16, intent NIFTI_INTENT_LABEL,
//                  label names in `descrip` as "labels:1=stomach;2=bowel"
//   vector fields  dim = [5, nx, ny, nz, 1, 3, 1, 1], float32, intent
//                  NIFTI_INTENT_VECTOR, intent_name "dvf_push" or "dvf_pull"
//   dose grids     intent_name "dose_gray"
// Error codes: nifti.io, nifti.bad_header, nifti.big_endian, nifti.datatype,
// nifti.dim_mismatch, nifti.oblique, nifti.kind.

using NiftiImage = std::variant<ScalarGrid, LabelMask>;

/// Label masks are files with NIFTI_INTENT_LABEL and an integer datatype;
/// everything else comes back as a ScalarGrid.
NiftiImage read_nifti(const std::filesystem::path& path);
ScalarGrid read_scalar_grid(const std::filesystem::path& path);
/// Accepts any integer datatype regardless of intent.
LabelMask read_label_mask(const std::filesystem::path& path);
VectorField read_vector_field(const std::filesystem::path& path);

void write_nifti(const ScalarGrid& grid, const std::filesystem::path& path);
void write_nifti(const LabelMask& mask, const std::filesystem::path& path);
void write_nifti(const BinaryMask& mask, const std::filesystem::path& path);  // uint8
void write_nifti(const VectorField& field, const std::filesystem::path& path);

}  // namespace dtwin
