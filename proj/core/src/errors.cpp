#include "maskroute/errors.hpp"

namespace maskroute {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kIo: return "io error";
    case FormatErrorKind::kTruncated: return "truncated file";
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kBadVersion: return "unsupported version";
    case FormatErrorKind::kBadCrc: return "crc mismatch";
    case FormatErrorKind::kBadPopcount: return "popcount mismatch";
    case FormatErrorKind::kBadPadding: return "nonzero pad bits";
    case FormatErrorKind::kNonBinary: return "non-binary mask value";
    case FormatErrorKind::kMalformed: return "malformed record";
  }
  return "format error";
}

}  // namespace maskroute
