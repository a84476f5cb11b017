#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace olg {

inline constexpr std::string_view kCodeVersion = "olgtax 1.0.0";

std::string sha256_hex(std::string_view data);
// Throws ProvenanceError if the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

/// One pipeline stage's outputs. Files are relative to the run directory.
struct ArtifactRecord {
    std::string stage;
    std::string config_hash;
    std::map<std::string, std::string> files;     // name -> sha256
    std::map<std::string, std::string> upstream;  // stage -> digest at the time of use
    std::map<std::string, std::string> info;      // seeds and other free-form metadata
    std::string created;

    // Hash over the file hashes and upstream links; what downstream stages pin.
    std::string digest() const;
};

/// manifest.json in a run directory. Every recorded file also gets a <file>.prov.json
/// sidecar naming its stage, digest, config hash and upstream links.
class Manifest {
public:
    static Manifest open(const std::filesystem::path& run_dir);

    const std::filesystem::path& dir() const { return dir_; }
    bool has(const std::string& stage) const { return records_.count(stage) != 0; }
    const std::map<std::string, ArtifactRecord>& records() const { return records_; }

    // Returns the record after re-hashing its files; throws ProvenanceError on any mismatch.
    const ArtifactRecord& require(const std::string& stage) const;

    // Hashes the listed files, writes sidecars and saves the manifest.
    const ArtifactRecord& record(const std::string& stage, const std::string& config_hash,
                                 const std::vector<std::string>& files,
                                 const std::vector<std::string>& upstream_stages,
                                 std::map<std::string, std::string> info = {});

    // Every problem found across all stages; empty means the provenance chain is intact.
    std::vector<std::string> verify_all() const;

private:
    void save() const;
    std::vector<std::string> verify(const ArtifactRecord& rec) const;

    std::filesystem::path dir_;
    std::map<std::string, ArtifactRecord> records_;
};

}  // namespace olg
