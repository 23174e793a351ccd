#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace soafog::cli {

struct Command {
    std::string name; // "ingest", "user add", "fixture-gen", ...

    std::string catalog;
    std::string file;
    std::string sensitivity = "public";
    std::string id;
    std::string config;
    std::string policy;
    std::string secret;
    std::string role;
    std::string label;
    std::string url;
    std::string token;
    std::string method = "GET";
    std::string data;
    std::string layers;
    std::string bbox;
    std::string style;
    std::string out;
    std::string scenario;
    std::string a;
    std::string b;
    std::string csv;
    std::string years = "2011-2014";
    int width = 256;
    int height = 256;
    int districts = 6;
    std::uint64_t seed = 7;
    bool zones = false;
};

/// Thrown by parse_args. exit_code is 0 for --help (message holds the usage
/// text) and 2 for malformed command lines.
class UsageError : public std::runtime_error {
public:
    UsageError(int exit_code, const std::string& message) : std::runtime_error(message), exit_code_(exit_code) {}
    int exit_code() const { return exit_code_; }

private:
    int exit_code_;
};

Command parse_args(const std::vector<std::string>& args);

/// 0 on success, 1 on a runtime failure (one line on `err`).
int execute_command(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse_args + execute_command with the exit-code contract applied.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace soafog::cli
