#include "hecnn/errors.hpp"

#include <exception>

namespace hecnn {

void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const DepthBudgetError& e) {
    throw DepthBudgetError(context + ": " + e.what());
  } catch (const KeyMismatchError& e) {
    throw KeyMismatchError(context + ": " + e.what());
  } catch (const AuthorizationError& e) {
    throw AuthorizationError(context + ": " + e.what());
  } catch (const MissingCostError& e) {
    throw MissingCostError(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  } catch (const Error& e) {
    throw Error(context + ": " + e.what());
  }
}

}  // namespace hecnn
