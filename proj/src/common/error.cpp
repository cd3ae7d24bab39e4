#include "care/error.hpp"

namespace care {

namespace {

template <typename E>
[[noreturn]] void prefixed(const std::string& prefix, const E& e) {
  throw E(prefix + e.what());
}

}  // namespace

void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const ShapeError& e) {
    prefixed(prefix, e);
  } catch (const DomainError& e) {
    prefixed(prefix, e);
  } catch (const ContractError& e) {
    prefixed(prefix, e);
  } catch (const ConfigError& e) {
    prefixed(prefix, e);
  } catch (const IoError& e) {
    prefixed(prefix, e);
  } catch (const FormatError& e) {
    prefixed(prefix, e);
  } catch (const NumericError& e) {
    prefixed(prefix, e);
  } catch (const Error& e) {
    prefixed(prefix, e);
  }
}

}  // namespace care
