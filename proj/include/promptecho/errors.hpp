#pragma once

#include <stdexcept>
#include <string>

namespace promptecho {

/// Base type for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Backend errors.
class LabelTooLong : public Error { public: using Error::Error; };
class BackendUnavailable : public Error { public: using Error::Error; };
class NondeterministicBackend : public Error { public: using Error::Error; };

// Scene world errors.
class UndecodableCell : public Error { public: using Error::Error; };
class CaptionParseError : public Error { public: using Error::Error; };
class NotApplicable : public Error { public: using Error::Error; };

// Reward engine errors.
class ScoreParseError : public Error { public: using Error::Error; };
class GroupTooSmall : public Error { public: using Error::Error; };
class EmptyPrompt : public Error { public: using Error::Error; };

// Policy / trainer errors.
class IncompatibleRecord : public Error { public: using Error::Error; };
class NonFiniteGradient : public Error { public: using Error::Error; };

// Corpus errors.
class DegenerateSplit : public Error { public: using Error::Error; };
class CorpusMismatch : public Error { public: using Error::Error; };

// Judge errors.
class VerdictParseError : public Error { public: using Error::Error; };

// Text rendering errors.
class UnsupportedGlyph : public Error { public: using Error::Error; };
class BandOverflow : public Error { public: using Error::Error; };
class LabelParseError : public Error { public: using Error::Error; };

// Configuration and file I/O.
class ConfigError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

}  // namespace promptecho
