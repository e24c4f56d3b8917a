#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "h2/block_tree.hpp"
#include "h2/cluster_tree.hpp"
#include "test_support.hpp"

using namespace h2;
using namespace h2::testing;

TEST_CASE("median split on a sorted line") {
    Matrix c(4, 1);
    c << 0, 1, 2, 3;
    ClusterTree ct(PointSet(c), 2);
    const auto& root = ct.node(ct.root());
    REQUIRE(!root.is_leaf());
    CHECK(root.begin == 0);
    CHECK(root.end == 4);
    CHECK(ct.node(root.child[0]).begin == 0);
    CHECK(ct.node(root.child[0]).end == 2);
    CHECK(ct.node(root.child[1]).begin == 2);
    CHECK(ct.node(root.child[1]).end == 4);
}

TEST_CASE("empty point set is rejected") {
    Matrix c(0, 1);
    CHECK_THROWS(PointSet{c});
}

TEST_CASE("1d grid n=2048 leaf 32 gives 6 levels of off-diagonal structure") {
    auto ct = build_cluster_tree(grid1d(2048, -1, 1), 32);
    CHECK(ct->depth() == 6);
    for (int v : ct->leaves()) CHECK(ct->node(v).size() <= 32);
    auto bt = build_block_tree(ct, ct, 1.0, Admissibility::weak);
    // 2^l off-diagonal blocks at level l in the weak partitioning
    std::vector<int> count(bt->max_level() + 1, 0);
    for (int b : bt->admissible_leaves()) count[bt->node(b).level]++;
    for (int l = 1; l <= 6; ++l) CHECK(count[l] == (1 << l));
}

TEST_CASE("2d 16x16 grid leaf 64: four leaves, boxes contain their points") {
    PointSet pts = grid2d(16, 16);
    ClusterTree ct(pts, 64);
    CHECK(ct.leaves().size() == 4);
    for (int v : ct.leaves()) {
        const auto& nd = ct.node(v);
        for (Index i = nd.begin; i < nd.end; ++i) CHECK(nd.box.contains(pts, ct.perm()[i]));
    }
    // every node's box contains all its points
    for (int v = 0; v < ct.num_nodes(); ++v) {
        const auto& nd = ct.node(v);
        for (Index i = nd.begin; i < nd.end; ++i) CHECK(nd.box.contains(pts, ct.perm()[i]));
    }
}

TEST_CASE("children partition the parent's range; depth near log2(n/leaf)") {
    std::mt19937_64 rng(7);
    Matrix c = random_matrix(333, 2, rng);
    ClusterTree ct(PointSet(c), 16);
    for (int v = 0; v < ct.num_nodes(); ++v) {
        const auto& nd = ct.node(v);
        if (nd.is_leaf()) continue;
        CHECK(ct.node(nd.child[0]).begin == nd.begin);
        CHECK(ct.node(nd.child[0]).end == ct.node(nd.child[1]).begin);
        CHECK(ct.node(nd.child[1]).end == nd.end);
    }
    CHECK(ct.depth() >= 5);   // ceil(log2(333/16)) = 5
    CHECK(ct.depth() <= 6);
}

TEST_CASE("admissibility predicate") {
    auto box1d = [](double lo, double hi) {
        BBox b;
        b.dim = 1;
        b.lo[0] = lo;
        b.hi[0] = hi;
        return b;
    };
    ClusterNode t, s;
    t.box = box1d(0, 1);
    s.box = box1d(0, 1);
    t.begin = s.begin = 0;
    t.end = s.end = 8;
    CHECK_FALSE(is_admissible(t, s, 1.0));                       // dist = 0
    CHECK_FALSE(is_admissible(t, s, 1.0, Admissibility::weak));  // t == s
    s.box = box1d(2, 3);
    s.begin = 8;
    s.end = 16;
    CHECK(is_admissible(t, s, 1.0));        // diam 1 <= 1 * dist 1
    CHECK(is_admissible(t, s, 1.0, Admissibility::weak));
    s.box = box1d(1.5, 2.5);
    CHECK_FALSE(is_admissible(t, s, 1.0));  // diam 1 > 1 * dist 0.5
}

TEST_CASE("n = leaf_size gives a single dense leaf") {
    auto ct = build_cluster_tree(grid1d(32), 32);
    auto bt = build_block_tree(ct, ct, 1.0, Admissibility::strong);
    CHECK(bt->admissible_leaves().empty());
    REQUIRE(bt->dense_leaves().size() == 1);
    CHECK(bt->node(bt->dense_leaves()[0]).row == ct->root());
}

TEST_CASE("strong block tree tiles the square exactly: 2d 32x32 grid") {
    auto ct = build_cluster_tree(grid2d(32, 32), 64);
    auto bt = build_block_tree(ct, ct, 1.0, Admissibility::strong);
    Index area = 0;
    for (int b : bt->admissible_leaves())
        area += ct->node(bt->node(b).row).size() * ct->node(bt->node(b).col).size();
    for (int b : bt->dense_leaves())
        area += ct->node(bt->node(b).row).size() * ct->node(bt->node(b).col).size();
    CHECK(area == Index(1024) * 1024);
    // random index-pair membership: each (i,j) covered by exactly one leaf
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<Index> d(0, 1023);
    for (int trial = 0; trial < 200; ++trial) {
        Index i = d(rng), j = d(rng);
        int hits = 0;
        auto covers = [&](int b) {
            const auto& t = ct->node(bt->node(b).row);
            const auto& s = ct->node(bt->node(b).col);
            return i >= t.begin && i < t.end && j >= s.begin && j < s.end;
        };
        for (int b : bt->admissible_leaves()) hits += covers(b);
        for (int b : bt->dense_leaves()) hits += covers(b);
        CHECK(hits == 1);
    }
}

TEST_CASE("monotone admissibility under strong mode") {
    auto ct = build_cluster_tree(grid2d(16, 16), 8);
    auto bt = build_block_tree(ct, ct, 1.0, Admissibility::strong);
    // every descendant pair of an admissible pair is admissible
    for (int b : bt->admissible_leaves()) {
        const auto& bn = bt->node(b);
        const auto& t = ct->node(bn.row);
        const auto& s = ct->node(bn.col);
        if (t.is_leaf() || s.is_leaf()) continue;
        for (int tc : t.child)
            for (int sc : s.child) CHECK(is_admissible(ct->node(tc), ct->node(sc), 1.0));
    }
}

TEST_CASE("permutation round trip is the identity") {
    std::mt19937_64 rng(11);
    Matrix pts = random_matrix(257, 3, rng);
    ClusterTree ct(PointSet(pts), 10);
    Matrix x = random_matrix(257, 4, rng);
    CHECK((ct.to_user(ct.to_internal(x)) - x).norm() == 0.0);
    CHECK((ct.to_internal(ct.to_user(x)) - x).norm() == 0.0);
}

TEST_CASE("point set text round trip") {
    std::mt19937_64 rng(5);
    PointSet p(random_matrix(10, 2, rng));
    std::stringstream ss;
    p.write(ss);
    PointSet q = PointSet::read(ss);
    CHECK((q.coords() - p.coords()).norm() == 0.0);
    std::stringstream bad("5 2\n1.0 2.0\n");
    CHECK_THROWS_AS(PointSet::read(bad), io_error);
}
