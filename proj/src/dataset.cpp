#include "hwau/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hwau/rng.hpp"

namespace hwau {

void CaseRecord::validate() const {
    if (images.empty()) throw DataError("case " + id + ": no modalities");
    if (images.size() != masks.size())
        throw DataError("case " + id + ": modality/mask count mismatch");
    for (size_t m = 0; m < images.size(); ++m) {
        images[m].validate();
        masks[m].validate();
        if (masks[m].d != images[m].d || masks[m].h != images[m].h || masks[m].w != images[m].w)
            throw DataError("case " + id + ": mask extents differ from modality " + std::to_string(m));
        if (masks[m].spacing != images[m].spacing)
            throw DataError("case " + id + ": mask spacing differs from modality " + std::to_string(m));
        for (float v : masks[m].voxels)
            if (v != 0.f && v != 1.f) throw DataError("case " + id + ": mask values must be 0 or 1");
    }
}

std::vector<ManifestEntry> Manifest::of_split(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == split) out.push_back(e);
    return out;
}

Manifest split_dataset(const Manifest& input, uint64_t seed) {
    const size_t n = input.entries.size();
    if (n == 0) throw DataError("split_dataset: empty manifest");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());

    const size_t n_train = size_t(std::llround(double(n) * 0.7));
    const size_t n_val = size_t(std::llround(double(n) * 0.1));
    Manifest out = input;
    out.seed = seed;
    for (size_t r = 0; r < n; ++r) {
        const char* split = r < n_train ? "train" : (r < n_train + n_val ? "val" : "test");
        out.entries[order[r]].split = split;
    }
    return out;
}

void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "# hwau-manifest v1 seed=" << m.seed << "\n";
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ';';
            s += v[i];
        }
        return s;
    };
    for (const auto& e : m.entries)
        f << e.case_id << "\t" << e.split << "\t" << join(e.image_paths) << "\t" << join(e.mask_paths)
          << "\n";
    if (!f) throw DataError("write failed: " + path);
}

namespace {
std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}
}  // namespace

Manifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    Manifest m;
    std::string line;
    if (!std::getline(f, line) || line.rfind("# hwau-manifest v1", 0) != 0)
        throw DataError("not a hwau manifest: " + path);
    const auto seed_pos = line.find("seed=");
    if (seed_pos != std::string::npos) m.seed = std::stoull(line.substr(seed_pos + 5));
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split_on(line, '\t');
        if (cols.size() != 4) throw DataError("malformed manifest line: " + line);
        ManifestEntry e;
        e.case_id = cols[0];
        e.split = cols[1];
        e.image_paths = split_on(cols[2], ';');
        e.mask_paths = split_on(cols[3], ';');
        if (e.image_paths.size() != e.mask_paths.size())
            throw DataError("manifest case " + e.case_id + ": image/mask path count mismatch");
        m.entries.push_back(std::move(e));
    }
    return m;
}

CaseRecord load_case(const ManifestEntry& entry) {
    CaseRecord rec;
    rec.id = entry.case_id;
    rec.split = entry.split;
    for (const auto& p : entry.image_paths) rec.images.push_back(read_volume(p));
    for (const auto& p : entry.mask_paths) rec.masks.push_back(read_volume(p));
    rec.validate();
    return rec;
}

}  // namespace hwau
