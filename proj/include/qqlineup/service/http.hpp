#ifndef QQLINEUP_SERVICE_HTTP_HPP
#define QQLINEUP_SERVICE_HTTP_HPP

#include <string>

#include "httplib.h"
#include "qqlineup/service/study_service.hpp"

namespace qqlineup::service {

namespace detail {

inline void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
  res.set_header("Cache-Control", "no-store");
}

inline std::string auth(const httplib::Request& req) { return req.get_header_value("Authorization"); }

}  // namespace detail

/// Registers the study routes on `server`. The service must outlive it.
inline void mount(httplib::Server& server, StudyService& svc) {
  using httplib::Request;
  using httplib::Response;
  server.Get("/healthz", [&](const Request&, Response& res) { detail::send(res, svc.healthz()); });
  server.Post("/lineups", [&](const Request& req, Response& res) {
    detail::send(res, svc.create_lineup(req.body, detail::auth(req)));
  });
  server.Post("/admin/import", [&](const Request& req, Response& res) {
    detail::send(res, svc.import_lineups(req.body, detail::auth(req)));
  });
  server.Get(R"(/lineups/([A-Za-z0-9_-]+))", [&](const Request& req, Response& res) {
    detail::send(res, svc.get_lineup(req.matches[1]));
  });
  server.Get(R"(/lineups/([A-Za-z0-9_-]+)/svg)", [&](const Request& req, Response& res) {
    detail::send(res, svc.get_lineup_svg(req.matches[1]));
  });
  server.Post(R"(/lineups/([A-Za-z0-9_-]+)/evaluations)", [&](const Request& req, Response& res) {
    detail::send(res, svc.post_evaluation(req.matches[1], req.body));
  });
  server.Get(R"(/lineups/([A-Za-z0-9_-]+)/result)", [&](const Request& req, Response& res) {
    detail::send(res, svc.get_result(req.matches[1], detail::auth(req)));
  });
  server.Post("/sessions", [&](const Request& req, Response& res) { detail::send(res, svc.create_session(req.body)); });
  server.Get(R"(/sessions/([A-Za-z0-9_-]+))", [&](const Request& req, Response& res) {
    detail::send(res, svc.get_session(req.matches[1]));
  });
}

}  // namespace qqlineup::service

#endif  // QQLINEUP_SERVICE_HTTP_HPP
