#include "tabkd/csv.hpp"

#include "tabkd/error.hpp"

namespace tabkd::csv {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

}  // namespace

bool Reader::next(Record& out) {
    out.fields.clear();
    int c = in_.peek();
    // skip blank lines
    while (c == '\n' || c == '\r') {
        in_.get();
        if (c == '\n') ++line_;
        c = in_.peek();
    }
    if (c == std::char_traits<char>::eof()) return false;
    out.line = line_ + 1;

    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    auto finish_field = [&]() {
        out.fields.push_back(was_quoted ? field : trim(field));
        field.clear();
        was_quoted = false;
    };
    while (true) {
        c = in_.get();
        if (c == std::char_traits<char>::eof()) {
            if (quoted) throw DataError("csv: unterminated quoted field starting on line " + std::to_string(out.line));
            finish_field();
            ++line_;
            return true;
        }
        const char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line_;
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"' && trim(field).empty()) {
            field.clear();
            quoted = true;
            was_quoted = true;
        } else if (ch == ',') {
            finish_field();
        } else if (ch == '\r') {
            if (in_.peek() == '\n') in_.get();
            finish_field();
            ++line_;
            return true;
        } else if (ch == '\n') {
            finish_field();
            ++line_;
            return true;
        } else if (!was_quoted) {
            field.push_back(ch);
        }
    }
}

std::vector<Record> read_all(std::istream& in) {
    Reader reader(in);
    std::vector<Record> out;
    Record rec;
    while (reader.next(rec)) out.push_back(rec);
    return out;
}

std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string join_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(fields[i]);
    }
    return out;
}

}  // namespace tabkd::csv
