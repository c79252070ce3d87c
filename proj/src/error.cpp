#include "flowdialog/error.hpp"

namespace flowdialog {

SyntaxError::SyntaxError(const std::string& message, int line, int column)
    : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

UnsupportedConstructError::UnsupportedConstructError(const std::string& construct, int line,
                                                     int column)
    : SyntaxError("unsupported construct: " + construct, line, column), construct_(construct) {}

}  // namespace flowdialog
