#ifndef GEOCBR_ERRORS_HPP
#define GEOCBR_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace geocbr {

// Base of every error the engine raises. Callers that only need a message can
// catch this; the subclasses exist so tests and the CLI can tell them apart.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FileMissing : public Error {
public:
    explicit FileMissing(const std::string& path) : Error("file not found: " + path) {}
};

class HeaderMismatch : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class EmptySplit : public Error {
public:
    using Error::Error;
};

class EmptyTrainingSet : public Error {
public:
    EmptyTrainingSet() : Error("training set is empty") {}
    using Error::Error;
};

class EmptyInput : public Error {
public:
    EmptyInput() : Error("cannot build an index over zero properties") {}
};

class NoComparables : public Error {
public:
    explicit NoComparables(std::int64_t target_id)
        : Error("no comparable with positive similarity for property " + std::to_string(target_id)),
          target_id_(target_id) {}

    std::int64_t target_id() const noexcept { return target_id_; }

private:
    std::int64_t target_id_;
};

class LengthMismatch : public Error {
public:
    LengthMismatch() : Error("ground truth and predictions differ in length") {}
};

class ZeroGroundTruth : public Error {
public:
    ZeroGroundTruth() : Error("ground truth value of zero makes percentage error undefined") {}
};

class MissingGroundTruth : public Error {
public:
    explicit MissingGroundTruth(std::int64_t id)
        : Error("no ground truth for property " + std::to_string(id)), id_(id) {}

    std::int64_t id() const noexcept { return id_; }

private:
    std::int64_t id_;
};

}  // namespace geocbr

#endif  // GEOCBR_ERRORS_HPP
