#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cesfit {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A strictly positive input (capital, labor, output) was zero or negative.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// A bracketed CES aggregate came out non-positive, so its real power is
/// undefined. Signals share parameters that are inadmissible for the data
/// point at hand, not a programming error.
class NonPositiveAggregate : public Error {
  public:
    explicit NonPositiveAggregate(const std::string& what) : Error(what) {}
    NonPositiveAggregate(const std::string& what, std::size_t observation_index)
        : Error(what + " (observation " + std::to_string(observation_index) + ")"),
          observation_(static_cast<std::ptrdiff_t>(observation_index)) {}

    bool has_observation() const { return observation_ >= 0; }
    std::size_t observation() const { return static_cast<std::size_t>(observation_); }

  private:
    std::ptrdiff_t observation_ = -1;
};

class MissingColumn : public Error {
  public:
    using Error::Error;
};

/// A CSV data row failed validation; `row()` is the 1-based data-row index.
class BadRow : public Error {
  public:
    BadRow(std::size_t row, const std::string& reason)
        : Error("row " + std::to_string(row) + ": " + reason), row_(row) {}
    std::size_t row() const { return row_; }

  private:
    std::size_t row_;
};

class EmptyDataset : public Error {
  public:
    using Error::Error;
};

class EmptyGrid : public Error {
  public:
    using Error::Error;
};

/// Every grid cell failed admissibility; there is no fit to report.
class AllCellsFailed : public Error {
  public:
    using Error::Error;
};

class MissingTag : public Error {
  public:
    using Error::Error;
};

/// Total sum of squares is zero (constant output), so R-squared is undefined.
class DegenerateData : public Error {
  public:
    using Error::Error;
};

class InadmissibleParams : public Error {
  public:
    using Error::Error;
};

}  // namespace cesfit
