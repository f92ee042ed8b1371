#include <qlflow/io/cli.hpp>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

int main(int argc, char** argv) {
  // Keep stdout for results (tables, reports); progress goes to stderr.
  spdlog::set_default_logger(spdlog::stderr_logger_st("qlflow"));
  return qlflow::io::run_cli(argc, argv, std::cout, std::cerr);
}
