#include "stabsnap/core.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace stabsnap {

Value Value::from_string(const std::string& s)
{
    return Value(std::vector<std::uint8_t>(s.begin(), s.end()));
}

std::string Value::hex() const
{
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

bool array_leq(const RegisterArray& a, const RegisterArray& b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("array_leq: length mismatch");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (!entry_leq(a[k], b[k]))
            return false;
    return true;
}

void merge_into(RegisterArray& a, const RegisterArray& b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("merge: length mismatch");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (b[k].ts > a[k].ts)
            a[k] = b[k];
}

VectorClock vector_clock(const RegisterArray& reg)
{
    VectorClock vc(reg.size());
    for (std::size_t k = 0; k < reg.size(); ++k)
        vc[k] = reg[k].is_bottom() ? 0 : reg[k].ts;
    return vc;
}

bool vc_leq(const VectorClock& a, const VectorClock& b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("vc_leq: length mismatch");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k] > b[k])
            return false;
    return true;
}

std::uint64_t vc_distance(const VectorClock& hi, const VectorClock& lo)
{
    if (hi.size() != lo.size())
        throw std::invalid_argument("vc_distance: length mismatch");
    constexpr auto cap = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t sum = 0;
    for (std::size_t k = 0; k < hi.size(); ++k) {
        if (hi[k] <= lo[k])
            continue;
        std::uint64_t d = hi[k] - lo[k];
        if (sum > cap - d)
            return cap;
        sum += d;
    }
    return sum;
}

void merge(ProtocolCore& core, std::span<const RegisterArray> received, bool repair_ts)
{
    for (const auto& r : received) {
        if (repair_ts)
            core.ts = std::max(core.ts, r[core.self].ts);
        merge_into(core.reg, r);
    }
    if (repair_ts)
        core.ts = std::max(core.ts, core.reg[core.self].ts);
}

std::string to_string(const RegisterEntry& e)
{
    if (e.is_bottom())
        return e.ts == 0 ? "_" : "(_," + std::to_string(e.ts) + ")";
    return "(" + e.value->hex() + "," + std::to_string(e.ts) + ")";
}

std::string to_string(const RegisterArray& a)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (k)
            os << ' ';
        os << to_string(a[k]);
    }
    os << ']';
    return os.str();
}

} // namespace stabsnap
