#pragma once
//
// h2 : the H2M1 binary container
//
// Layout: magic "H2M1", u32 version, then length-prefixed sections (u32 tag,
// u64 payload bytes). Little-endian throughout; floating-point payloads are
// raw IEEE doubles, so a round trip is bit-exact. The block tree is rebuilt
// deterministically from the stored cluster tree and its (eta, mode)
// parameters.
//

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "h2/h2_matrix.hpp"

namespace h2 {

static_assert(std::endian::native == std::endian::little,
              "H2M1 serialization assumes a little-endian host");

namespace detail {

constexpr char     k_magic[4]  = {'H', '2', 'M', '1'};
constexpr uint32_t k_version   = 1;

enum class Section : uint32_t {
    cluster_tree = 1,
    block_params = 2,
    flags        = 3,
    row_basis    = 4,
    col_basis    = 5,
    couplings    = 6,
    dense        = 7,
};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_matrix(const Matrix& m) {
        put<int64_t>(m.rows());
        put<int64_t>(m.cols());
        if (m.size() > 0)
            out_.write(reinterpret_cast<const char*>(m.data()),
                       std::streamsize(sizeof(double) * size_t(m.size())));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    template <typename T>
    T get() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw io_error(io_error::kind::truncated, "H2M1: truncated stream");
        return v;
    }
    Matrix get_matrix() {
        const int64_t r = get<int64_t>(), c = get<int64_t>();
        if (r < 0 || c < 0 || r > (int64_t(1) << 32) || c > (int64_t(1) << 32))
            throw io_error(io_error::kind::malformed, "H2M1: bad matrix header");
        Matrix m(r, c);
        if (m.size() > 0) {
            in_.read(reinterpret_cast<char*>(m.data()),
                     std::streamsize(sizeof(double) * size_t(m.size())));
            if (!in_) throw io_error(io_error::kind::truncated, "H2M1: truncated matrix payload");
        }
        return m;
    }

private:
    std::istream& in_;
};

inline void write_basis(Writer& w, const ClusterTree& ct, const BasisTree& b) {
    for (int v = 0; v < ct.num_nodes(); ++v) w.put<int64_t>(b.rank(v));
    for (int v = 0; v < ct.num_nodes(); ++v) {
        if (ct.node(v).is_leaf()) w.put_matrix(b.leaf_basis(v));
        if (v != ct.root()) w.put_matrix(b.transfer(v));
    }
}

inline BasisTree read_basis(Reader& r, const ClusterTree& ct) {
    BasisTree b(ct);
    for (int v = 0; v < ct.num_nodes(); ++v) b.set_rank(v, r.get<int64_t>());
    for (int v = 0; v < ct.num_nodes(); ++v) {
        if (ct.node(v).is_leaf()) b.leaf_basis(v) = r.get_matrix();
        if (v != ct.root()) b.transfer(v) = r.get_matrix();
    }
    return b;
}

} // namespace detail

inline void serialize(const H2Matrix& h, std::ostream& out) {
    using detail::Section;
    detail::Writer w(out);
    out.write(detail::k_magic, 4);
    w.put<uint32_t>(detail::k_version);

    auto section = [&](Section tag, auto&& body) {
        std::ostringstream buf(std::ios::binary);
        detail::Writer bw(buf);
        body(bw);
        std::string payload = buf.str();
        w.put<uint32_t>(static_cast<uint32_t>(tag));
        w.put<uint64_t>(payload.size());
        out.write(payload.data(), std::streamsize(payload.size()));
    };

    const ClusterTree& ct = *h.tree;
    section(Section::cluster_tree, [&](detail::Writer& bw) {
        bw.put<int64_t>(ct.n());
        bw.put<int32_t>(ct.dim());
        bw.put<int64_t>(ct.leaf_size());
        bw.put<int32_t>(ct.num_nodes());
        for (int v = 0; v < ct.num_nodes(); ++v) {
            const auto& nd = ct.node(v);
            bw.put<int64_t>(nd.begin);
            bw.put<int64_t>(nd.end);
            bw.put<int32_t>(nd.level);
            bw.put<int32_t>(nd.parent);
            bw.put<int32_t>(nd.child[0]);
            bw.put<int32_t>(nd.child[1]);
            for (int a = 0; a < ct.dim(); ++a) bw.put<double>(nd.box.lo[a]);
            for (int a = 0; a < ct.dim(); ++a) bw.put<double>(nd.box.hi[a]);
        }
        for (Index i = 0; i < ct.n(); ++i) bw.put<int64_t>(ct.perm()[i]);
    });
    section(Section::block_params, [&](detail::Writer& bw) {
        bw.put<double>(h.blocks->eta());
        bw.put<uint8_t>(h.blocks->mode() == Admissibility::weak ? 1 : 0);
        bw.put<int64_t>(h.blocks->num_nodes());
        bw.put<int64_t>(int64_t(h.blocks->admissible_leaves().size()));
        bw.put<int64_t>(int64_t(h.blocks->dense_leaves().size()));
    });
    section(Section::flags, [&](detail::Writer& bw) {
        bw.put<uint8_t>(h.symmetric ? 1 : 0);
        bw.put<uint8_t>(h.orthonormal ? 1 : 0);
    });
    section(Section::row_basis, [&](detail::Writer& bw) { detail::write_basis(bw, ct, h.row_basis); });
    if (!h.symmetric)
        section(Section::col_basis,
                [&](detail::Writer& bw) { detail::write_basis(bw, ct, h.col_basis); });
    section(Section::couplings, [&](detail::Writer& bw) {
        int64_t count = 0;
        for (int b : h.blocks->admissible_leaves())
            if (h.stores(b)) ++count;
        bw.put<int64_t>(count);
        for (int b : h.blocks->admissible_leaves()) {
            if (!h.stores(b)) continue;
            bw.put<int32_t>(b);
            bw.put_matrix(h.coupling_of(b));
        }
    });
    section(Section::dense, [&](detail::Writer& bw) {
        int64_t count = 0;
        for (int b : h.blocks->dense_leaves())
            if (h.stores(b)) ++count;
        bw.put<int64_t>(count);
        for (int b : h.blocks->dense_leaves()) {
            if (!h.stores(b)) continue;
            bw.put<int32_t>(b);
            bw.put_matrix(h.dense_of(b));
        }
    });
}

inline H2Matrix deserialize(std::istream& in) {
    using detail::Section;
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::k_magic, 4) != 0)
        throw io_error(io_error::kind::bad_magic, "H2M1: bad magic");
    detail::Reader r(in);
    const uint32_t version = r.get<uint32_t>();
    if (version != detail::k_version)
        throw io_error(io_error::kind::version_mismatch,
                       "H2M1: unsupported version " + std::to_string(version));

    H2Matrix h;
    std::shared_ptr<const ClusterTree> ct;
    bool have_flags = false, have_row = false;
    double eta = 1.0;
    Admissibility mode = Admissibility::strong;
    int64_t check_nodes = -1, check_adm = -1, check_dense = -1;
    std::vector<std::pair<int32_t, Matrix>> couplings, denses;

    while (true) {
        uint32_t tag_raw = 0;
        in.read(reinterpret_cast<char*>(&tag_raw), sizeof(tag_raw));
        if (in.eof()) break;
        if (!in) throw io_error(io_error::kind::truncated, "H2M1: truncated section header");
        const uint64_t len = r.get<uint64_t>();
        (void)len;
        switch (static_cast<Section>(tag_raw)) {
            case Section::cluster_tree: {
                const int64_t n   = r.get<int64_t>();
                const int32_t dim = r.get<int32_t>();
                const int64_t lsz = r.get<int64_t>();
                const int32_t nv  = r.get<int32_t>();
                if (n < 1 || dim < 1 || dim > 3 || nv < 1)
                    throw io_error(io_error::kind::malformed, "H2M1: bad cluster tree header");
                std::vector<ClusterNode> nodes(nv);
                for (auto& nd : nodes) {
                    nd.begin    = r.get<int64_t>();
                    nd.end      = r.get<int64_t>();
                    nd.level    = r.get<int32_t>();
                    nd.parent   = r.get<int32_t>();
                    nd.child[0] = r.get<int32_t>();
                    nd.child[1] = r.get<int32_t>();
                    nd.box.dim  = dim;
                    for (int a = 0; a < dim; ++a) nd.box.lo[a] = r.get<double>();
                    for (int a = 0; a < dim; ++a) nd.box.hi[a] = r.get<double>();
                }
                std::vector<Index> perm(n);
                for (auto& p : perm) p = r.get<int64_t>();
                ct = ClusterTree::restore(std::move(nodes), std::move(perm), dim, lsz);
                break;
            }
            case Section::block_params:
                eta  = r.get<double>();
                mode = r.get<uint8_t>() ? Admissibility::weak : Admissibility::strong;
                check_nodes = r.get<int64_t>();
                check_adm   = r.get<int64_t>();
                check_dense = r.get<int64_t>();
                break;
            case Section::flags:
                h.symmetric   = r.get<uint8_t>() != 0;
                h.orthonormal = r.get<uint8_t>() != 0;
                have_flags    = true;
                break;
            case Section::row_basis:
                if (!ct) throw io_error(io_error::kind::malformed, "H2M1: basis before cluster tree");
                h.row_basis = detail::read_basis(r, *ct);
                have_row    = true;
                break;
            case Section::col_basis:
                if (!ct) throw io_error(io_error::kind::malformed, "H2M1: basis before cluster tree");
                h.col_basis = detail::read_basis(r, *ct);
                break;
            case Section::couplings: {
                const int64_t count = r.get<int64_t>();
                for (int64_t i = 0; i < count; ++i) {
                    int32_t b = r.get<int32_t>();
                    couplings.emplace_back(b, r.get_matrix());
                }
                break;
            }
            case Section::dense: {
                const int64_t count = r.get<int64_t>();
                for (int64_t i = 0; i < count; ++i) {
                    int32_t b = r.get<int32_t>();
                    denses.emplace_back(b, r.get_matrix());
                }
                break;
            }
            default:
                throw io_error(io_error::kind::malformed,
                               "H2M1: unknown section " + std::to_string(tag_raw));
        }
    }

    if (!ct || !have_flags || !have_row)
        throw io_error(io_error::kind::truncated, "H2M1: missing sections");

    h.tree   = ct;
    h.blocks = build_block_tree(ct, ct, eta, mode);
    if ((check_nodes >= 0 && check_nodes != h.blocks->num_nodes()) ||
        (check_adm >= 0 && check_adm != int64_t(h.blocks->admissible_leaves().size())) ||
        (check_dense >= 0 && check_dense != int64_t(h.blocks->dense_leaves().size())))
        throw io_error(io_error::kind::malformed, "H2M1: block structure mismatch after rebuild");
    h.coupling.resize(h.blocks->admissible_leaves().size());
    h.dense.resize(h.blocks->dense_leaves().size());
    for (auto& [b, m] : couplings) {
        if (b < 0 || b >= h.blocks->num_nodes() || h.blocks->adm_ordinal(b) < 0)
            throw io_error(io_error::kind::malformed, "H2M1: coupling at non-admissible block");
        h.coupling[h.blocks->adm_ordinal(b)] = std::move(m);
    }
    for (auto& [b, m] : denses) {
        if (b < 0 || b >= h.blocks->num_nodes() || h.blocks->dense_ordinal(b) < 0)
            throw io_error(io_error::kind::malformed, "H2M1: dense payload at non-dense block");
        h.dense[h.blocks->dense_ordinal(b)] = std::move(m);
    }
    if (h.symmetric) {
        // non-canonical slots must stay empty
        for (int b : h.blocks->admissible_leaves())
            if (!h.blocks->canonical(b)) h.coupling[h.blocks->adm_ordinal(b)] = Matrix();
        for (int b : h.blocks->dense_leaves())
            if (!h.blocks->canonical(b)) h.dense[h.blocks->dense_ordinal(b)] = Matrix();
    }
    return h;
}

inline void write_h2_file(const H2Matrix& h, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error(io_error::kind::malformed, "cannot open " + path + " for writing");
    serialize(h, out);
}

inline H2Matrix read_h2_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(io_error::kind::malformed, "cannot open " + path);
    return deserialize(in);
}

} // namespace h2
