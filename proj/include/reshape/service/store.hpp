#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "reshape/image/png.hpp"
#include "reshape/service/digest.hpp"
#include "reshape/service/project.hpp"

namespace reshape::service {

namespace detail {

/// Writes `bytes` to a sibling temp file, flushes it to disk, then renames it
/// over `path`, so readers and crashes see either the old or the new file.
inline void write_atomically(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    static std::atomic<unsigned> counter{0};
    const auto tmp = path.parent_path() /
                     ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()) + "." + std::to_string(counter++));
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error("cannot write " + tmp.string() + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            std::filesystem::remove(tmp);
            throw Error("cannot write " + tmp.string() + ": " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) {
        std::filesystem::remove(tmp);
        throw Error("cannot flush " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline bool valid_project_id(const std::string& id) {
    return id.size() == 16 && id.find_first_not_of("0123456789abcdef") == std::string::npos;
}

}  // namespace detail

/// One directory per project: `<root>/<id>/state.json` plus content-addressed
/// blobs under `<root>/<id>/blobs/<sha256>`. Each project has its own
/// reader/writer lock; callers take it through `read_lock` / `write_lock`.
class ProjectStore {
public:
    explicit ProjectStore(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
    }

    const std::filesystem::path& root() const { return root_; }

    std::filesystem::path project_dir(const std::string& id) const { return root_ / id; }

    bool exists(const std::string& id) const {
        return detail::valid_project_id(id) && std::filesystem::is_regular_file(project_dir(id) / "state.json");
    }

    /// Reserves a fresh id and its directory.
    std::string allocate_id() {
        std::lock_guard guard(ids_);
        std::random_device rd;
        for (;;) {
            const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
            if (std::filesystem::create_directory(project_dir(buf))) {
                std::filesystem::create_directories(project_dir(buf) / "blobs");
                return buf;
            }
        }
    }

    std::vector<std::string> list() const {
        std::vector<std::string> out;
        for (const auto& e : std::filesystem::directory_iterator(root_)) {
            const auto name = e.path().filename().string();
            if (exists(name)) out.push_back(name);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    Project load(const std::string& id) const {
        if (!exists(id)) throw NotFoundError("no project '" + id + "'");
        const auto bytes = image::detail::read_bytes(project_dir(id) / "state.json");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(bytes.begin(), bytes.end());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("project " + id + ": unreadable state: " + e.what());
        }
        return project_from_json(j);
    }

    void save(const Project& p) const {
        const std::string text = to_json(p).dump(2);
        detail::write_atomically(project_dir(p.id) / "state.json",
                                 std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }

    /// Stores bytes under their SHA-256 and returns the digest.
    std::string put_blob(const std::string& id, std::span<const std::uint8_t> bytes) const {
        const std::string digest = sha256_hex(bytes);
        const auto path = blob_path(id, digest);
        if (!std::filesystem::exists(path)) detail::write_atomically(path, bytes);
        return digest;
    }

    std::filesystem::path blob_path(const std::string& id, const std::string& digest) const {
        if (!is_sha256_hex(digest)) throw ValueError("'" + digest + "' is not a blob digest");
        return project_dir(id) / "blobs" / digest;
    }

    std::vector<std::uint8_t> read_blob(const std::string& id, const std::string& digest) const {
        const auto path = blob_path(id, digest);
        if (!std::filesystem::exists(path)) throw NotFoundError("project " + id + " has no blob " + digest);
        auto bytes = image::detail::read_bytes(path);
        if (sha256_hex(bytes) != digest) throw InvariantError("blob " + digest + " is corrupt");
        return bytes;
    }

    std::shared_lock<std::shared_mutex> read_lock(const std::string& id) { return std::shared_lock(mutex_for(id)); }
    std::unique_lock<std::shared_mutex> write_lock(const std::string& id) { return std::unique_lock(mutex_for(id)); }

private:
    std::shared_mutex& mutex_for(const std::string& id) {
        std::lock_guard guard(locks_guard_);
        auto& slot = locks_[id];
        if (!slot) slot = std::make_unique<std::shared_mutex>();
        return *slot;
    }

    std::filesystem::path root_;
    std::mutex ids_;
    std::mutex locks_guard_;
    std::map<std::string, std::unique_ptr<std::shared_mutex>> locks_;
};

}  // namespace reshape::service
