#include <httplib.h>

#include "longvid/error.hpp"
#include "longvid/gateway.hpp"

namespace longvid {

namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(std::string base_url, std::string api_key, double timeout_s)
      : client_(base_url), api_key_(std::move(api_key)) {
    auto secs = static_cast<time_t>(timeout_s);
    auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    client_.set_connection_timeout(secs, usecs);
    client_.set_read_timeout(secs, usecs);
    client_.set_write_timeout(secs, usecs);
  }

  HttpResponse post_json(const std::string& path, const std::string& body) override {
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client_.Post(path, headers, body, "application/json");
    if (!res) {
      raise(Errc::backend_error, "transport failure: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }

 private:
  httplib::Client client_;
  std::string api_key_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport(const std::string& base_url,
                                                      const std::string& api_key,
                                                      double timeout_s) {
  return std::make_unique<HttplibTransport>(base_url, api_key, timeout_s);
}

}  // namespace longvid
