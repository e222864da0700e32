#include "amopt/terminal.hpp"

namespace amopt {

std::string to_string(G2Kind kind) {
    switch (kind) {
        case G2Kind::EuroCallSqrt: return "euro_call_sqrt";
        case G2Kind::PutV1: return "put_v1";
        case G2Kind::PutV1V2: return "put_v1v2";
        case G2Kind::PutExactVe: return "put_exact";
        case G2Kind::CallDivTaylor: return "call_div_taylor";
        case G2Kind::GeoMeanPutTaylor: return "geo_mean_taylor";
        case G2Kind::MaxCallExactVe: return "max_call_exact";
    }
    return "unknown";
}

G2Kind g2_kind_from_string(const std::string& name) {
    if (name == "euro_call_sqrt") return G2Kind::EuroCallSqrt;
    if (name == "put_v1") return G2Kind::PutV1;
    if (name == "put_v1v2") return G2Kind::PutV1V2;
    if (name == "put_exact") return G2Kind::PutExactVe;
    if (name == "call_div_taylor") return G2Kind::CallDivTaylor;
    if (name == "geo_mean_taylor") return G2Kind::GeoMeanPutTaylor;
    if (name == "max_call_exact") return G2Kind::MaxCallExactVe;
    throw ValidationError("unknown g2 kind: " + name);
}

std::string terminal_pair_check(const TerminalPair& pair) {
    const auto kind = pair.contract.kind;
    const int n = pair.contract.n_assets;
    switch (pair.g2) {
        case G2Kind::EuroCallSqrt:
        case G2Kind::CallDivTaylor:
            if (kind != PayoffKind::CallVanilla || n != 1)
                return to_string(pair.g2) + " requires a single-asset call";
            break;
        case G2Kind::PutV1:
        case G2Kind::PutV1V2:
        case G2Kind::PutExactVe:
            if (kind != PayoffKind::PutVanilla || n != 1)
                return to_string(pair.g2) + " requires a single-asset put";
            break;
        case G2Kind::GeoMeanPutTaylor:
            if (kind != PayoffKind::PutGeometricMean)
                return "geo_mean_taylor requires a geometric-mean put";
            break;
        case G2Kind::MaxCallExactVe:
            if (kind != PayoffKind::CallOnMax || n != 2)
                return "max_call_exact requires a two-asset call-on-max";
            break;
    }
    return {};
}

}  // namespace amopt
