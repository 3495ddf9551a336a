#pragma once

#define HMJLS_VERSION_MAJOR 0
#define HMJLS_VERSION_MINOR 1
#define HMJLS_VERSION_PATCH 0
#define HMJLS_VERSION "0.1.0"
