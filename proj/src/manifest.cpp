#include "olg/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "olg/errors.hpp"

namespace olg {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw ProvenanceError("SHA-256 initialization failed");
        }
    }
    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw ProvenanceError("SHA-256 update failed");
    }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw ProvenanceError("SHA-256 finalization failed");
        std::ostringstream os;
        for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
        return os.str();
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

json to_json(const ArtifactRecord& r) {
    return json{{"stage", r.stage},       {"config_hash", r.config_hash}, {"files", r.files},
                {"upstream", r.upstream}, {"info", r.info},               {"created", r.created},
                {"digest", r.digest()}};
}

ArtifactRecord from_json(const json& j) {
    ArtifactRecord r;
    r.stage = j.at("stage").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.files = j.at("files").get<std::map<std::string, std::string>>();
    r.upstream = j.at("upstream").get<std::map<std::string, std::string>>();
    r.info = j.at("info").get<std::map<std::string, std::string>>();
    r.created = j.at("created").get<std::string>();
    return r;
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".prov.json"); }

}  // namespace

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ProvenanceError("cannot read artifact " + path.string());
    Sha256 h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::string ArtifactRecord::digest() const {
    std::string s = "stage " + stage + "\nconfig " + config_hash + "\n";
    for (const auto& [name, hash] : files) s += "file " + name + " " + hash + "\n";
    for (const auto& [st, d] : upstream) s += "upstream " + st + " " + d + "\n";
    return sha256_hex(s);
}

Manifest Manifest::open(const fs::path& run_dir) {
    Manifest m;
    m.dir_ = run_dir;
    const fs::path file = run_dir / "manifest.json";
    if (!fs::exists(file)) return m;
    try {
        std::ifstream in(file);
        const json doc = json::parse(in);
        for (const auto& r : doc.at("artifacts")) {
            auto rec = from_json(r);
            m.records_[rec.stage] = rec;
        }
    } catch (const json::exception& e) {
        throw ProvenanceError("corrupt manifest " + file.string() + ": " + e.what());
    }
    return m;
}

void Manifest::save() const {
    fs::create_directories(dir_);
    json arts = json::array();
    for (const auto& [stage, rec] : records_) arts.push_back(to_json(rec));
    const json doc{{"code_version", std::string(kCodeVersion)}, {"artifacts", arts}};
    const fs::path tmp = dir_ / "manifest.json.tmp";
    {
        std::ofstream out(tmp);
        out << doc.dump(2) << "\n";
        if (!out) throw ProvenanceError("cannot write manifest in " + dir_.string());
    }
    fs::rename(tmp, dir_ / "manifest.json");
}

std::vector<std::string> Manifest::verify(const ArtifactRecord& rec) const {
    std::vector<std::string> problems;
    const std::string where = "stage '" + rec.stage + "': ";
    for (const auto& [name, hash] : rec.files) {
        const fs::path p = dir_ / name;
        if (!fs::exists(p)) {
            problems.push_back(where + "missing file " + name);
            continue;
        }
        const std::string actual = sha256_file(p);
        if (actual != hash) {
            problems.push_back(where + name + " has sha256 " + actual.substr(0, 12) + " but the manifest records " +
                               hash.substr(0, 12));
        }
        try {
            std::ifstream in(sidecar(p));
            const json side = json::parse(in);
            if (side.at("sha256").get<std::string>() != hash || side.at("stage").get<std::string>() != rec.stage ||
                side.at("digest").get<std::string>() != rec.digest()) {
                problems.push_back(where + "sidecar of " + name + " disagrees with the manifest");
            }
        } catch (const std::exception&) {
            problems.push_back(where + "missing or unreadable sidecar for " + name);
        }
    }
    for (const auto& [up, digest] : rec.upstream) {
        const auto it = records_.find(up);
        if (it == records_.end()) {
            problems.push_back(where + "upstream stage '" + up + "' is not in the manifest");
        } else if (it->second.digest() != digest) {
            problems.push_back(where + "upstream stage '" + up + "' changed after use (pinned " + digest.substr(0, 12) +
                               ", now " + it->second.digest().substr(0, 12) + ")");
        }
    }
    return problems;
}

const ArtifactRecord& Manifest::require(const std::string& stage) const {
    const auto it = records_.find(stage);
    if (it == records_.end()) {
        throw ProvenanceError("required upstream stage '" + stage + "' has no artifact in " + dir_.string() +
                              "; run that stage first");
    }
    const auto problems = verify(it->second);
    if (!problems.empty()) throw ProvenanceError(problems.front());
    return it->second;
}

const ArtifactRecord& Manifest::record(const std::string& stage, const std::string& config_hash,
                                       const std::vector<std::string>& files,
                                       const std::vector<std::string>& upstream_stages,
                                       std::map<std::string, std::string> info) {
    ArtifactRecord rec;
    rec.stage = stage;
    rec.config_hash = config_hash;
    rec.info = std::move(info);
    rec.created = now_utc();
    for (const auto& up : upstream_stages) rec.upstream[up] = require(up).digest();
    for (const auto& f : files) rec.files[f] = sha256_file(dir_ / f);
    const std::string digest = rec.digest();
    for (const auto& [name, hash] : rec.files) {
        const json side{{"stage", stage},   {"sha256", hash},          {"digest", digest},
                        {"config_hash", config_hash}, {"upstream", rec.upstream}};
        std::ofstream out(sidecar(dir_ / name));
        out << side.dump(2) << "\n";
        if (!out) throw ProvenanceError("cannot write sidecar for " + name);
    }
    records_[stage] = rec;
    save();
    return records_[stage];
}

std::vector<std::string> Manifest::verify_all() const {
    std::vector<std::string> all;
    for (const auto& [stage, rec] : records_) {
        auto p = verify(rec);
        all.insert(all.end(), p.begin(), p.end());
    }
    return all;
}

}  // namespace olg
