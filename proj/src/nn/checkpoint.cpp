#include "cromo/nn/checkpoint.hpp"

#include "cromo/error.hpp"

#include <cstring>
#include <functional>
#include <fstream>

namespace cromo::nn {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'C', 'R', 'O', 'M', 'O', 'C', 'K', 'P'};
constexpr char kEmbMagic[8] = {'C', 'R', 'O', 'M', 'O', 'E', 'M', 'B'};

class Writer {
public:
    explicit Writer(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw RuntimeError("cannot write '" + path.string() + "'");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    template <class T>
    void pod(T v) { bytes(&v, sizeof(T)); }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void finish(const fs::path& path) {
        out_.flush();
        if (!out_) throw RuntimeError("write failure on '" + path.string() + "'");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw RuntimeError("cannot open '" + path.string() + "'");
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in_) throw RuntimeError("truncated file '" + path_.string() + "'");
    }
    template <class T>
    T pod() {
        T v{};
        bytes(&v, sizeof(T));
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        if (n > (1U << 24)) throw RuntimeError("corrupt string length in '" + path_.string() + "'");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

private:
    fs::path path_;
    std::ifstream in_;
};

void atomic_write(const fs::path& path, const std::function<void(Writer&)>& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        Writer w(tmp);
        body(w);
        w.finish(tmp);
    }
    fs::rename(tmp, path);
}

}  // namespace

const Mat& Container::tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return m;
    throw RuntimeError("checkpoint has no tensor '" + name + "'");
}

bool Container::has_tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return true;
    return false;
}

void save_container(const fs::path& path, const Container& c) {
    atomic_write(path, [&](Writer& w) {
        w.bytes(kMagic, sizeof(kMagic));
        w.pod(c.version);
        w.str(c.config_hash);
        w.pod(static_cast<std::uint32_t>(c.meta.size()));
        for (const auto& [k, v] : c.meta) {
            w.str(k);
            w.str(v);
        }
        w.pod(static_cast<std::uint32_t>(c.tensors.size()));
        for (const auto& [name, m] : c.tensors) {
            w.str(name);
            w.pod(static_cast<std::uint64_t>(m.rows()));
            w.pod(static_cast<std::uint64_t>(m.cols()));
            w.bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
        }
    });
}

Container load_container(const fs::path& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw RuntimeError("'" + path.string() + "' is not a checkpoint");
    Container c;
    c.version = r.pod<std::uint32_t>();
    if (c.version != Container::kVersion)
        throw RuntimeError("unsupported checkpoint version " + std::to_string(c.version) + " in '" + path.string() + "'");
    c.config_hash = r.str();
    const auto n_meta = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        c.meta[k] = r.str();
    }
    const auto n = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.str();
        const auto rows = r.pod<std::uint64_t>();
        const auto cols = r.pod<std::uint64_t>();
        if (rows * cols > (1ULL << 32)) throw RuntimeError("corrupt tensor size in '" + path.string() + "'");
        Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        r.bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
        c.tensors.emplace_back(std::move(name), std::move(m));
    }
    return c;
}

void append_tensors(Container& c, const std::vector<Parameter*>& params, const std::vector<StateTensor>& state,
                    const std::string& prefix) {
    for (const auto* p : params) c.tensors.emplace_back(prefix + p->name, p->value);
    for (const auto& s : state) c.tensors.emplace_back(prefix + s.name, *s.value);
}

void load_tensors(const Container& c, const std::vector<Parameter*>& params, const std::vector<StateTensor>& state,
                  const std::string& prefix) {
    auto assign = [&](const std::string& name, Mat& dst) {
        const Mat& src = c.tensor(prefix + name);
        if (src.rows() != dst.rows() || src.cols() != dst.cols())
            throw ValidationError("checkpoint tensor '" + prefix + name + "' has shape " + std::to_string(src.rows()) +
                                  "x" + std::to_string(src.cols()) + ", model expects " + std::to_string(dst.rows()) +
                                  "x" + std::to_string(dst.cols()) + " (architecture mismatch)");
        dst = src;
    };
    for (auto* p : params) assign(p->name, p->value);
    for (const auto& s : state) assign(s.name, *s.value);
}

void append_network(Container& c, TriNet& net, const std::string& prefix) {
    append_tensors(c, net.parameters(), net.state(), prefix);
}

void load_network(const Container& c, TriNet& net, const std::string& prefix) {
    load_tensors(c, net.parameters(), net.state(), prefix);
}

void write_embedding_dump(const fs::path& path, const Mat& features, const std::vector<int>& labels,
                          const std::vector<int>& task_ids) {
    require(static_cast<Eigen::Index>(labels.size()) == features.rows() &&
                static_cast<Eigen::Index>(task_ids.size()) == features.rows(),
            "embedding dump: label/task arrays must match the row count");
    atomic_write(path, [&](Writer& w) {
        w.bytes(kEmbMagic, sizeof(kEmbMagic));
        w.pod(static_cast<std::uint64_t>(features.rows()));
        w.pod(static_cast<std::uint64_t>(features.cols()));
        w.pod(static_cast<std::uint8_t>(1));
        for (Eigen::Index i = 0; i < features.size(); ++i) w.pod(static_cast<float>(features.data()[i]));
        for (int y : labels) w.pod(static_cast<std::int32_t>(y));
        for (int t : task_ids) w.pod(static_cast<std::int32_t>(t));
    });
}

EmbeddingDump read_embedding_dump(const fs::path& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kEmbMagic, sizeof(kEmbMagic)) != 0)
        throw RuntimeError("'" + path.string() + "' is not an embedding dump");
    const auto n = r.pod<std::uint64_t>();
    const auto d = r.pod<std::uint64_t>();
    if (r.pod<std::uint8_t>() != 1) throw RuntimeError("embedding dump: unsupported dtype");
    EmbeddingDump out;
    out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < out.features.size(); ++i) out.features.data()[i] = r.pod<float>();
    out.labels.resize(n);
    out.task_ids.resize(n);
    for (auto& y : out.labels) y = r.pod<std::int32_t>();
    for (auto& t : out.task_ids) t = r.pod<std::int32_t>();
    return out;
}

}  // namespace cromo::nn
