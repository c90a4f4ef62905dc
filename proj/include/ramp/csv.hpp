#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ramp::csv {

// Splits one CSV line; handles double-quoted fields with "" escapes.
std::vector<std::string> split_line(std::string_view line, char sep = ',');

// Picks ',' or '\t' based on which appears in the header.
char detect_separator(std::string_view header);

// Column index lookup for a parsed header row.
class Header {
public:
    Header() = default;
    explicit Header(std::vector<std::string> names);

    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Shortest decimal form that round-trips to the same double.
std::string format_real(double value);

std::optional<double> parse_real(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

// getline that strips a trailing '\r'.
bool read_line(std::istream& in, std::string& line);

}  // namespace ramp::csv
