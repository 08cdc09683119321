#pragma once

// JSON mappings for the library's value types (nlohmann::json ADL hooks),
// plus file helpers.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "dtwin/config.hpp"
#include "dtwin/metrics.hpp"
#include "dtwin/qa.hpp"
#include "dtwin/surface.hpp"

namespace dtwin {

using Json = nlohmann::json;

void to_json(Json& j, const Vec3& v);
void from_json(const Json& j, Vec3& v);
void to_json(Json& j, const GridGeometry& g);
void from_json(const Json& j, GridGeometry& g);

void to_json(Json& j, const WaveParams& p);
void from_json(const Json& j, WaveParams& p);
void to_json(Json& j, const ParamRange& r);
void from_json(const Json& j, ParamRange& r);
void to_json(Json& j, const SearchBox& b);
void from_json(const Json& j, SearchBox& b);
void to_json(Json& j, const RegParams& p);
void from_json(const Json& j, RegParams& p);

void to_json(Json& j, const CurveSpec& c);
void from_json(const Json& j, CurveSpec& c);
void to_json(Json& j, const TubeSpec& t);
void from_json(const Json& j, TubeSpec& t);
void to_json(Json& j, const DoseBlob& b);
void from_json(const Json& j, DoseBlob& b);
void to_json(Json& j, const PhantomSpec& s);
void from_json(const Json& j, PhantomSpec& s);
void to_json(Json& j, const OrganDescriptor& d);

void to_json(Json& j, const Centerline& c);
void from_json(const Json& j, Centerline& c);
void to_json(Json& j, const SectionalCurve& s);
void from_json(const Json& j, SectionalCurve& s);
void to_json(Json& j, const TubeSurface& s);
void from_json(const Json& j, TubeSurface& s);
void to_json(Json& j, const KeypointSet& k);
void from_json(const Json& j, KeypointSet& k);

void to_json(Json& j, const Stats& s);
void to_json(Json& j, const Bin& b);
void to_json(Json& j, const QaThresholds& t);
void to_json(Json& j, const QaReport& r);

void to_json(Json& j, const OrganConfig& o);
void from_json(const Json& j, OrganConfig& o);
void to_json(Json& j, const RunConfig& c);
void from_json(const Json& j, RunConfig& c);

/// Parses a file. Errors: "json.io", "json.parse".
Json read_json(const std::filesystem::path& path);
/// Writes `j` with two-space indentation and a trailing newline. Error: "json.io".
void write_json(const Json& j, const std::filesystem::path& path);

/// Converts with `from_json`, mapping library exceptions to `code`.
template <class T>
T json_as(const Json& j, const std::string& code) {
    try {
        return j.get<T>();
    } catch (const Json::exception& e) {
        throw Error(code, e.what());
    }
}

}  // namespace dtwin
