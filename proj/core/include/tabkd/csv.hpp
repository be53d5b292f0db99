#pragma once

#include <istream>
#include <string>
#include <vector>

namespace tabkd::csv {

/// One parsed record plus the 1-based line number where it started.
struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

/// RFC-4180 reader: comma separated, double-quote quoting with "" escapes,
/// LF or CRLF line ends, quoted fields may span lines. Unquoted fields are
/// trimmed of surrounding blanks.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    /// Returns false at end of input. Blank lines are skipped.
    bool next(Record& out);

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

std::vector<Record> read_all(std::istream& in);

/// Quotes a field when it contains a comma, quote or line break.
std::string escape(const std::string& field);

std::string join_row(const std::vector<std::string>& fields);

}  // namespace tabkd::csv
