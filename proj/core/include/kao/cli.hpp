#pragma once

#include <string>
#include <vector>

#include "kao/config.hpp"
#include "kao/grid.hpp"

namespace kao {

/// Horizontal concatenation with mid-gray separator columns between images.
Grid compose_grid(const std::vector<Grid>& row, int64_t separator = 2);

/// The four fixed evaluation configurations, worst to best.
std::vector<std::string> ablation_labels();

void cmd_gen_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_inpaint(const RunConfig& cfg, const std::string& image_path,
                 const std::string& mask_path);
void cmd_eval(const RunConfig& cfg, const std::string& dataset_dir);
void cmd_figures(const RunConfig& cfg, const std::string& eval_dir);

/// Parses argv, dispatches, and maps errors onto the exit-code contract
/// (0 ok, 2 config, 3 data, 4 numeric divergence).
int run_cli(int argc, const char* const* argv);

}  // namespace kao
