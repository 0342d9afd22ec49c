#include "rap/wire/call_result.hpp"

namespace rap::wire {

WireFrame response_frame(std::string id, std::string service, const CallResult& result) {
  if (result.ok()) return make_service_response(std::move(id), std::move(service), true, result.response);
  return make_service_response(std::move(id), std::move(service), false, {},
                               std::string(to_string(result.status)) + ": " + result.detail);
}

CallResult call_result_from(const WireFrame& response) {
  if (response.result.value_or(false)) return CallResult{CallStatus::ok, response.msg.value_or(Value{}), {}};
  std::string text = response.text.value_or("");
  for (auto st : {CallStatus::no_provider, CallStatus::timeout, CallStatus::provider_fault}) {
    std::string prefix = std::string(to_string(st)) + ": ";
    if (text.starts_with(prefix)) return CallResult{st, {}, text.substr(prefix.size())};
  }
  return CallResult{CallStatus::provider_fault, {}, text};
}

}  // namespace rap::wire
