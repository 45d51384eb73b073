#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rangescore {

/// Base of every exception thrown by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// ATT&CK snapshot or CAPEC files could not be loaded or are inconsistent.
class catalog_error : public error {
public:
    using error::error;
};

/// A file or directory could not be read or written.
class io_error : public error {
public:
    using error::error;
};

/// Malformed scoring configuration or out-of-range parameter.
class config_error : public error {
public:
    using error::error;
};

/// A report document violates its schema or references unknown ids.
class validation_error : public error {
public:
    validation_error(std::string report_id, std::string field, const std::string& message)
        : error(compose(report_id, field, message)),
          report_id_(std::move(report_id)),
          field_(std::move(field)) {}

    const std::string& report_id() const noexcept { return report_id_; }
    const std::string& field() const noexcept { return field_; }

private:
    static std::string compose(const std::string& id, const std::string& field, const std::string& msg) {
        std::string out = id.empty() ? std::string("<unknown report>") : id;
        if (!field.empty()) out += ": " + field;
        return out + ": " + msg;
    }

    std::string report_id_;
    std::string field_;
};

} // namespace rangescore
