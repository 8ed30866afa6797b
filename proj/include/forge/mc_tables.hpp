#pragma once

namespace forge::mc {

extern const int kEdgeTable[256];
extern const int kTriTable[256][16];

}  // namespace forge::mc
