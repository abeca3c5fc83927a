#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "cifuv/chain.hpp"
#include "cifuv/hash.hpp"
#include "cifuv/rng.hpp"

using namespace cifuv;
using namespace cifuv::chain;

namespace {

std::vector<Transaction> make_txs(int count) {
    std::vector<Transaction> txs;
    for (int i = 0; i < count; ++i)
        txs.push_back(Transaction::from_string("bench-tx-" + std::to_string(i)));
    return txs;
}

Chain make_chain(int blocks, std::uint32_t bits) {
    SplitMix64 rng(1);
    Chain chain(mine_genesis(make_txs(4), bits, rng));
    for (int h = 1; h <= blocks; ++h)
        chain.extend(mine_block(*chain.header(chain.canonical_tip()), make_txs(4), bits, rng));
    return chain;
}

} // namespace

static void BM_Sha256Header(benchmark::State& state) {
    BlockHeader header;
    header.height = 123456;
    header.nonce = 987654321;
    for (auto _ : state) benchmark::DoNotOptimize(header.hash());
}
BENCHMARK(BM_Sha256Header);

static void BM_MerkleRoot(benchmark::State& state) {
    const auto txs = make_txs(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(merkle_root(txs));
}
BENCHMARK(BM_MerkleRoot)->Arg(4)->Arg(64)->Arg(1024);

static void BM_MerkleProveVerify(benchmark::State& state) {
    const auto txs = make_txs(static_cast<int>(state.range(0)));
    const Hash256 root = merkle_root(txs);
    std::size_t index = 0;
    for (auto _ : state) {
        auto proof = merkle_prove(txs, index);
        benchmark::DoNotOptimize(verify_merkle(root, proof));
        index = (index + 1) % txs.size();
    }
}
BENCHMARK(BM_MerkleProveVerify)->Arg(64)->Arg(1024);

static void BM_MineBlock(benchmark::State& state) {
    SplitMix64 rng(2);
    const auto bits = static_cast<std::uint32_t>(state.range(0));
    auto genesis = mine_genesis(make_txs(1), 0, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(mine_block(genesis.header, make_txs(2), bits, rng));
}
BENCHMARK(BM_MineBlock)->Arg(8)->Arg(12);

static void BM_VerifyHeaderChain(benchmark::State& state) {
    const auto chain = make_chain(static_cast<int>(state.range(0)), 8);
    const auto headers = chain.canonical_headers();
    for (auto _ : state) benchmark::DoNotOptimize(verify_header_chain(headers));
}
BENCHMARK(BM_VerifyHeaderChain)->Arg(50)->Arg(500);
