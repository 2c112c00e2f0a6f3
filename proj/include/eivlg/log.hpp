#pragma once

#include <spdlog/spdlog.h>

namespace eivlg {

/// Configures the default logger from EIVLG_LOG (error|warn|info|debug,
/// default warn). Logs go to stderr.
void InitLogging();

}  // namespace eivlg
