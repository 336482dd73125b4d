#pragma once

#include <cstdio>
#include <ostream>
#include <string>

namespace smplab {

/// Number format of every artifact: 17 significant digits, enough for an
/// exact round trip.
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Minimal comma-separated row writer with LF endings.
class CsvRow {
public:
    explicit CsvRow(std::ostream& out) : out_(out) {}
    ~CsvRow() { out_ << '\n'; }
    CsvRow(const CsvRow&) = delete;
    CsvRow& operator=(const CsvRow&) = delete;

    CsvRow& operator<<(double x) { return put(format_double(x)); }
    CsvRow& operator<<(std::size_t x) { return put(std::to_string(x)); }
    CsvRow& operator<<(int x) { return put(std::to_string(x)); }
    CsvRow& operator<<(const std::string& s) { return put(s); }
    CsvRow& operator<<(const char* s) { return put(s); }

private:
    CsvRow& put(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
        return *this;
    }

    std::ostream& out_;
    bool first_ = true;
};

}  // namespace smplab
