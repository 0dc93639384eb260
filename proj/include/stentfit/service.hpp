#pragma once

#include <png.h>
#include <sys/socket.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro Eigen uses as a name.
#include "stentfit/json_io.hpp"
#include "stentfit/pipeline.hpp"
#include "stentfit/volume.hpp"

#include "httplib.h"

namespace stentfit {

// ---------------------------------------------------------------------------
// Slice rendering

/// Windowed 8-bit grayscale slice. axis: 0 = x, 1 = y, 2 = z. Row r of the
/// image is the second in-plane axis index r, column c the first.
struct SliceImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

inline SliceImage render_slice(const VoxelVolume& vol, int axis, int index, double window, double level) {
  const GridGeometry& g = vol.geometry();
  if (axis < 0 || axis > 2) throw Error(ErrorCode::InvalidConfig, "axis must be x, y or z");
  if (index < 0 || index >= g.dims[axis]) throw Error(ErrorCode::OutOfBounds, "slice index outside the volume");
  if (!(window > 0.0)) throw Error(ErrorCode::InvalidConfig, "window must be > 0");
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  SliceImage img{g.dims[a1], g.dims[a2], {}};
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  const double lo = level - 0.5 * window;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      std::array<int, 3> v{};
      v[axis] = index;
      v[a1] = c;
      v[a2] = r;
      const double t = (vol.at({v[0], v[1], v[2]}) - lo) / window;
      img.pixels[static_cast<std::size_t>(r) * img.width + c] =
          static_cast<std::uint8_t>(std::clamp(std::round(t * 255.0), 0.0, 255.0));
    }
  return img;
}

inline std::string encode_png(const SliceImage& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error(ErrorCode::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::IoFailure, "png_create_info_struct failed");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, "png encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.height; ++r)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(r) * img.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// ---------------------------------------------------------------------------
// Jobs

struct JobRecord {
  std::string id;
  std::string stage = "segmenting";
  double progress = 0.0;
  std::optional<std::string> error;
  Json config;
};

inline Json to_json(const JobRecord& r) {
  Json j = {{"id", r.id}, {"stage", r.stage}, {"progress", r.progress}, {"config", r.config}};
  j["error"] = r.error ? Json(*r.error) : Json(nullptr);
  return j;
}

inline JobRecord job_record_from_json(const Json& j) {
  JobRecord r;
  r.id = j.at("id").get<std::string>();
  r.stage = j.at("stage").get<std::string>();
  r.progress = j.at("progress").get<double>();
  if (j.contains("error") && j["error"].is_string()) r.error = j["error"].get<std::string>();
  if (j.contains("config")) r.config = j["config"];
  return r;
}

inline double stage_progress(Stage s) {
  switch (s) {
    case Stage::Segmenting: return 0.0;
    case Stage::Skeletonizing: return 0.25;
    case Stage::Simulating: return 0.5;
    case Stage::Measuring: return 0.85;
  }
  return 0.0;
}

/// Outcome of a job submission: a record, or the violated invariants.
struct Submission {
  std::optional<JobRecord> record;
  std::vector<Error> errors;
};

inline std::filesystem::path default_workdir() {
  if (const char* env = std::getenv("STENTFIT_WORKDIR"); env != nullptr && *env != '\0') return env;
  return "stentfit-work";
}

/// Runs pipeline jobs on their own threads, one directory per job under
/// <workdir>/jobs/<id>. Records are persisted as job.json so they survive a
/// restart.
class JobManager {
 public:
  JobManager(Json base_config, std::filesystem::path base_dir, std::filesystem::path workdir)
      : base_(std::move(base_config)), base_dir_(std::move(base_dir)), workdir_(std::move(workdir)) {
    std::error_code ec;
    std::filesystem::create_directories(jobs_dir(), ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + jobs_dir().string());
    for (const auto& entry : std::filesystem::directory_iterator(jobs_dir())) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 4 && name.starts_with("job-"))
        next_ = std::max(next_, std::strtoull(name.c_str() + 4, nullptr, 10) + 1);
    }
  }

  ~JobManager() {
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(mu_);
      threads.swap(threads_);
    }
    for (auto& t : threads)
      if (t.joinable()) t.join();
  }

  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  const std::filesystem::path& workdir() const { return workdir_; }
  std::filesystem::path jobs_dir() const { return workdir_ / "jobs"; }
  std::filesystem::path job_dir(const std::string& id) const { return jobs_dir() / id; }
  const Json& base_config() const { return base_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  /// Merges `overrides` onto the base configuration and starts the job.
  Submission submit(const Json& overrides) {
    Submission sub;
    if (!overrides.is_object()) {
      sub.errors.emplace_back(ErrorCode::InvalidConfig, "request body must be a JSON object");
      return sub;
    }
    if (overrides.contains("output_dir")) {
      sub.errors.emplace_back(ErrorCode::InvalidConfig, "output_dir is chosen by the service");
      return sub;
    }
    Json merged = base_;
    merged.merge_patch(overrides);
    PipelineConfig cfg;
    try {
      cfg = pipeline_config_from_json(merged, base_dir_);
    } catch (const Error& e) {
      sub.errors.push_back(e);
      return sub;
    }
    sub.errors = cfg.violations();
    if (!sub.errors.empty()) return sub;

    JobRecord rec;
    {
      std::lock_guard lock(mu_);
      char buf[32];
      std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(next_++));
      rec.id = buf;
    }
    cfg.output_dir = job_dir(rec.id);
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) {
      sub.errors.emplace_back(ErrorCode::IoFailure, "cannot create " + cfg.output_dir.string());
      return sub;
    }
    rec.config = merged;
    auto state = std::make_shared<JobRecord>(rec);
    {
      std::lock_guard lock(mu_);
      jobs_[rec.id] = state;
      persist(*state);
      threads_.emplace_back([this, state, cfg] { execute(state, cfg); });
    }
    sub.record = rec;
    return sub;
  }

  /// Snapshot of a job record, from memory or from its job.json.
  std::optional<JobRecord> get(const std::string& id) const {
    if (!valid_id(id)) return std::nullopt;
    {
      std::lock_guard lock(mu_);
      if (auto it = jobs_.find(id); it != jobs_.end()) return *it->second;
    }
    const auto path = job_dir(id) / "job.json";
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      return job_record_from_json(read_json_file(path));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  std::vector<JobRecord> list() const {
    std::lock_guard lock(mu_);
    std::vector<JobRecord> out;
    for (const auto& [id, rec] : jobs_) out.push_back(*rec);
    return out;
  }

  static bool valid_id(const std::string& id) {
    static const std::regex re("job-[0-9]{6,}");
    return std::regex_match(id, re);
  }

 private:
  void persist(const JobRecord& rec) const { write_json_file(job_dir(rec.id) / "job.json", to_json(rec)); }

  void update(const std::shared_ptr<JobRecord>& state, const std::string& stage, double progress,
              std::optional<std::string> error = std::nullopt) {
    std::lock_guard lock(mu_);
    state->stage = stage;
    state->progress = progress;
    state->error = std::move(error);
    persist(*state);
  }

  void execute(const std::shared_ptr<JobRecord>& state, const PipelineConfig& cfg) {
    try {
      run_pipeline(cfg, [&](Stage s) { update(state, stage_name(s), stage_progress(s)); });
      update(state, "done", 1.0);
    } catch (const std::exception& e) {
      double p;
      {
        std::lock_guard lock(mu_);
        p = state->progress;
      }
      update(state, "failed", p, std::string(e.what()));
    }
  }

  Json base_;
  std::filesystem::path base_dir_;
  std::filesystem::path workdir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<JobRecord>> jobs_;
  std::vector<std::thread> threads_;
  unsigned long long next_ = 1;
};

// ---------------------------------------------------------------------------
// HTTP

inline Json errors_json(const std::vector<Error>& errors) {
  Json list = Json::array();
  for (const auto& e : errors) list.push_back({{"code", e.name()}, {"detail", e.what()}});
  return {{"errors", list}};
}

/// HTTP front end over a JobManager.
class Service {
 public:
  explicit Service(JobManager& jobs) : jobs_(jobs) {
    // SO_REUSEADDR only, so a port held by another listener fails to bind
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    routes();
  }

  ~Service() { stop(); }

  /// Binds the port (PortBusy when taken); port 0 picks a free one.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      const int p = server_.bind_to_any_port(host);
      if (p < 0) throw Error(ErrorCode::PortBusy, "could not bind any port on " + host);
      port_ = p;
    } else {
      if (!server_.bind_to_port(host, port)) throw Error(ErrorCode::PortBusy, "port " + std::to_string(port) + " is busy");
      port_ = port;
    }
    return port_;
  }

  /// Blocks serving requests until stop().
  void listen() { server_.listen_after_bind(); }

  void start_background() {
    thread_ = std::thread([this] { listen(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  static void send_json(httplib::Response& res, int status, const Json& j) {
    res.status = status;
    res.set_content(j.dump(2) + "\n", "application/json");
  }
  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, {{"error", msg}});
  }

  void send_artifact(const std::string& id, const char* name, const char* type, httplib::Response& res) {
    const auto rec = jobs_.get(id);
    if (!rec) return send_error(res, 404, "unknown job " + id);
    const auto path = jobs_.job_dir(id) / name;
    if (!std::filesystem::exists(path)) return send_error(res, 404, std::string(name) + " not available (stage " + rec->stage + ")");
    res.status = 200;
    res.set_content(detail::read_file(path), type);
  }

  void send_mesh(const std::string& id, const std::string& stage, httplib::Response& res) {
    if (stage == "initial") return send_artifact(id, artifact::kMeshInitial, "text/plain", res);
    if (stage == "final") return send_artifact(id, artifact::kMeshFinal, "text/plain", res);
    if (stage == "expanded") return send_artifact(id, artifact::kMeshExpanded, "text/plain", res);
    if (stage == "lumen") return send_artifact(id, artifact::kLumen, "text/plain", res);
    send_error(res, 400, "stage must be initial, final, expanded or lumen");
  }

  std::shared_ptr<const VoxelVolume> volume_for(const std::filesystem::path& path) {
    std::lock_guard lock(cache_mu_);
    const std::string key = path.lexically_normal().string();
    if (auto it = volumes_.find(key); it != volumes_.end()) return it->second;
    auto vol = std::make_shared<const VoxelVolume>(load_volume(path));
    volumes_[key] = vol;
    return vol;
  }

  void routes() {
    server_.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      Json body = Json::object();
      if (!req.body.empty()) {
        try {
          body = Json::parse(req.body);
        } catch (const Json::parse_error& e) {
          return send_json(res, 422, errors_json({Error(ErrorCode::InvalidConfig, e.what())}));
        }
      }
      const Submission sub = jobs_.submit(body);
      if (!sub.record) return send_json(res, 422, errors_json(sub.errors));
      send_json(res, 201, to_json(*sub.record));
    });
    server_.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
      Json list = Json::array();
      for (const auto& r : jobs_.list()) list.push_back(to_json(r));
      send_json(res, 200, {{"jobs", list}});
    });
    server_.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto rec = jobs_.get(req.matches[1]);
      if (!rec) return send_error(res, 404, "unknown job " + std::string(req.matches[1]));
      send_json(res, 200, to_json(*rec));
    });
    server_.Get(R"(/jobs/([^/]+)/mesh)", [this](const httplib::Request& req, httplib::Response& res) {
      send_mesh(req.matches[1], req.has_param("stage") ? req.get_param_value("stage") : "final", res);
    });
    server_.Get(R"(/jobs/([^/]+)/mesh/([a-z]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send_mesh(req.matches[1], req.matches[2], res);
    });
    server_.Get(R"(/jobs/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
      send_artifact(req.matches[1], artifact::kReport, "application/json", res);
    });
    server_.Get(R"(/jobs/([^/]+)/trace)", [this](const httplib::Request& req, httplib::Response& res) {
      send_artifact(req.matches[1], artifact::kTrace, "text/csv", res);
    });
    server_.Get(R"(/jobs/([^/]+)/centerlines)", [this](const httplib::Request& req, httplib::Response& res) {
      send_artifact(req.matches[1], artifact::kCenterlines, "application/json", res);
    });
    server_.Get("/volume/slice", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        std::filesystem::path path;
        if (req.has_param("job")) {
          const auto rec = jobs_.get(req.get_param_value("job"));
          if (!rec) return send_error(res, 404, "unknown job");
          path = pipeline_config_from_json(rec->config, jobs_.base_dir()).volume;
        } else {
          path = pipeline_config_from_json(jobs_.base_config(), jobs_.base_dir()).volume;
        }
        const auto vol = volume_for(path);
        const std::string axis_name = req.has_param("axis") ? req.get_param_value("axis") : "z";
        const int axis = axis_name == "x" ? 0 : axis_name == "y" ? 1 : axis_name == "z" ? 2 : -1;
        if (axis < 0) return send_error(res, 400, "axis must be x, y or z");
        if (!req.has_param("index")) return send_error(res, 400, "index is required");
        const int index = std::stoi(req.get_param_value("index"));
        const auto [mn, mx] = std::minmax_element(vol->data().begin(), vol->data().end());
        double window = std::max(1e-6, static_cast<double>(*mx - *mn));
        double level = 0.5 * (static_cast<double>(*mx) + static_cast<double>(*mn));
        if (req.has_param("window")) window = std::stod(req.get_param_value("window"));
        if (req.has_param("level")) level = std::stod(req.get_param_value("level"));
        res.status = 200;
        res.set_content(encode_png(render_slice(*vol, axis, index, window, level)), "image/png");
      } catch (const Error& e) {
        send_error(res, e.code() == ErrorCode::OutOfBounds ? 404 : 400, e.what());
      } catch (const std::exception& e) {
        send_error(res, 400, e.what());
      }
    });
  }

  JobManager& jobs_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex cache_mu_;
  std::map<std::string, std::shared_ptr<const VoxelVolume>> volumes_;
};

}  // namespace stentfit
