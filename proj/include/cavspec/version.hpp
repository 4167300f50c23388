#pragma once

#define CAVSPEC_VERSION "0.1.0"
