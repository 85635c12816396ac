#pragma once

// Grid taxi game. Each taxi sees its own board of waiting passengers; the
// population only enters through traffic jams, whose probability grows with
// the share of taxis on the current tile. The composite state space is far
// too large for tables, so states are stepped lazily and packed into a
// 64-bit code for replay storage.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/model.hpp"
#include "mfg/random.hpp"

namespace mfg {

enum class Tile : std::uint8_t { Start, Wall, Region1, Region2 };

struct TaxiState {
  int x = 0;  // column
  int y = 0;  // row
  int dest_x = 0;
  int dest_y = 0;
  bool passenger = false;
  std::uint64_t board = 0;  // bit (y * width + x) set = passenger waiting

  friend bool operator==(const TaxiState&, const TaxiState&) = default;
};

struct TaxiParams {
  std::size_t horizon = 100;
  double spawn_probability = 0.8;
  double jam_scale = 10.0;
  double jam_cap = 0.7;
  double region1_reward = 1.0;
  double region2_reward = 1.2;
};

inline constexpr std::string_view kDefaultTaxiMap =
    "111\n"
    "111\n"
    "111\n"
    "HSH\n"
    "222\n"
    "222\n"
    "222\n";

class TaxiEnvironment {
 public:
  using State = TaxiState;

  enum Action : std::size_t { Wait = 0, Up = 1, Down = 2, Left = 3, Right = 4 };
  static constexpr std::size_t kNumActions = 5;

  /// Parses rows of {S, H, 1, 2}; blank lines and surrounding whitespace are ignored.
  explicit TaxiEnvironment(std::string_view map = kDefaultTaxiMap, TaxiParams params = {}) : params_(params) {
    std::istringstream in{std::string(map)};
    std::string line;
    int starts = 0;
    while (std::getline(in, line)) {
      line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }),
                 line.end());
      if (line.empty()) continue;
      if (width_ == 0) width_ = static_cast<int>(line.size());
      if (static_cast<int>(line.size()) != width_) throw ConfigError("taxi map: rows differ in length");
      for (char c : line) {
        switch (c) {
          case 'S': tiles_.push_back(Tile::Start); ++starts; break;
          case 'H': tiles_.push_back(Tile::Wall); break;
          case '1': tiles_.push_back(Tile::Region1); break;
          case '2': tiles_.push_back(Tile::Region2); break;
          default: throw ConfigError(std::string("taxi map: unknown tile '") + c + "'");
        }
      }
      ++height_;
    }
    if (starts != 1) throw ConfigError("taxi map: exactly one start tile S is required");
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
      if (tiles_[i] == Tile::Start) start_ = static_cast<int>(i);
      if (tiles_[i] == Tile::Region1) region_tiles_[0].push_back(static_cast<int>(i));
      if (tiles_[i] == Tile::Region2) region_tiles_[1].push_back(static_cast<int>(i));
    }
    if (region_tiles_[0].empty() && region_tiles_[1].empty()) throw ConfigError("taxi map: no region tiles");
    if (tiles_.size() > 64) throw ConfigError("taxi map: at most 64 tiles supported");
    // code = ((board_bits * n + dest) * n + pos) * 2 + passenger must fit in 64 bits.
    const std::size_t n = tiles_.size();
    const std::size_t free_tiles = region_tiles_[0].size() + region_tiles_[1].size();
    double bits = static_cast<double>(free_tiles) + 2.0 * std::log2(static_cast<double>(n)) + 1.0;
    if (bits > 63.0) throw ConfigError("taxi map: too large for the 64-bit state encoding");
    for (int r = 0; r < 2; ++r)
      for (std::size_t k = 0; k < region_tiles_[r].size(); ++k) free_index_.emplace_back(region_tiles_[r][k]);
  }

  const TaxiParams& params() const { return params_; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t num_tiles() const { return tiles_.size(); }
  Tile tile(int x, int y) const { return tiles_[static_cast<std::size_t>(y * width_ + x)]; }
  int tile_index(int x, int y) const { return y * width_ + x; }
  const std::vector<int>& region_tiles(int region) const { return region_tiles_[region - 1]; }

  /// 1 or 2 for region tiles, 0 otherwise.
  int region_of(int tile_idx) const {
    switch (tiles_[static_cast<std::size_t>(tile_idx)]) {
      case Tile::Region1: return 1;
      case Tile::Region2: return 2;
      default: return 0;
    }
  }

  double region_reward(int region) const { return region == 2 ? params_.region2_reward : params_.region1_reward; }

  /// Probability that a move fails because of traffic on the current tile.
  double jam_probability(double tile_mass) const {
    return std::min(params_.jam_cap, params_.jam_scale * tile_mass);
  }

  bool passable(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return false;
    const Tile t = tile(x, y);
    return t != Tile::Wall && t != Tile::Start;
  }

  // SampledModel interface ---------------------------------------------------

  std::size_t horizon() const { return params_.horizon; }
  std::size_t num_actions() const { return kNumActions; }
  std::size_t num_cells() const { return tiles_.size(); }
  std::size_t cell(const State& s) const { return static_cast<std::size_t>(tile_index(s.x, s.y)); }

  State sample_initial(Rng&) const {
    State s;
    s.x = start_ % width_;
    s.y = start_ / width_;
    return s;
  }

  /// Spawns passengers, then applies the action. Pickup and delivery each pay
  /// the reward of the region they happen in.
  StepResult<State> step(const State& s, std::size_t action, std::span<const double> mu_t, Rng& rng) const {
    State next = s;
    for (int r = 0; r < 2; ++r) spawn(next, r, rng);

    double reward = 0.0;
    const int here = tile_index(s.x, s.y);
    if (action == Wait) {
      if (next.passenger) {
        if (next.dest_x == s.x && next.dest_y == s.y) {
          reward = region_reward(region_of(here));
          next.passenger = false;
          next.dest_x = next.dest_y = 0;
        }
      } else if (next.board >> here & 1ULL) {
        const int region = region_of(here);
        next.board &= ~(1ULL << here);
        next.passenger = true;
        const int dest = pick_destination(region, here, rng);
        next.dest_x = dest % width_;
        next.dest_y = dest / width_;
        reward = region_reward(region);
      }
      return {reward, next};
    }

    if (uniform01(rng) < jam_probability(mu_t[static_cast<std::size_t>(here)])) return {reward, next};
    int nx = s.x, ny = s.y;
    switch (action) {
      case Up: --ny; break;
      case Down: ++ny; break;
      case Left: --nx; break;
      case Right: ++nx; break;
      default: throw ArgumentError("taxi: action out of range");
    }
    if (passable(nx, ny)) {
      next.x = nx;
      next.y = ny;
    }
    return {reward, next};
  }

  /// One-hot position, passenger flag, one-hot destination (zero without a
  /// passenger), one {0,1} entry per tile for waiting passengers, then t / T.
  std::size_t observation_size() const { return 3 * tiles_.size() + 2; }
  void observe(const State& s, std::size_t t, std::span<double> out) const {
    const std::size_t n = tiles_.size();
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(tile_index(s.x, s.y))] = 1.0;
    if (s.passenger) {
      out[n] = 1.0;
      out[n + 1 + static_cast<std::size_t>(tile_index(s.dest_x, s.dest_y))] = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) out[2 * n + 1 + i] = static_cast<double>(s.board >> i & 1ULL);
    out[3 * n + 1] = static_cast<double>(t) / static_cast<double>(params_.horizon);
  }

  /// Bijective on valid states (destination (0,0) whenever no passenger rides).
  std::uint64_t encode(const State& s) const {
    const std::uint64_t n = tiles_.size();
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < free_index_.size(); ++k)
      if (s.board >> free_index_[k] & 1ULL) bits |= 1ULL << k;
    const auto dest = static_cast<std::uint64_t>(tile_index(s.dest_x, s.dest_y));
    const auto pos = static_cast<std::uint64_t>(tile_index(s.x, s.y));
    return ((bits * n + dest) * n + pos) * 2 + (s.passenger ? 1 : 0);
  }

  State decode(std::uint64_t code) const {
    const std::uint64_t n = tiles_.size();
    State s;
    s.passenger = code & 1ULL;
    code >>= 1;
    const auto pos = static_cast<int>(code % n);
    code /= n;
    const auto dest = static_cast<int>(code % n);
    code /= n;
    for (std::size_t k = 0; k < free_index_.size(); ++k)
      if (code >> k & 1ULL) s.board |= 1ULL << free_index_[k];
    s.x = pos % width_;
    s.y = pos / width_;
    s.dest_x = dest % width_;
    s.dest_y = dest / width_;
    return s;
  }

  /// True when (x, y) is passable or the start tile and the destination rule holds.
  bool valid(const State& s) const {
    if (s.x < 0 || s.y < 0 || s.x >= width_ || s.y >= height_) return false;
    if (tile(s.x, s.y) == Tile::Wall) return false;
    if (!s.passenger && (s.dest_x != 0 || s.dest_y != 0)) return false;
    for (std::size_t i = 0; i < tiles_.size(); ++i)
      if ((s.board >> i & 1ULL) && region_of(static_cast<int>(i)) == 0) return false;
    return true;
  }

 private:
  // With probability spawn_probability, a passenger appears on a uniformly
  // chosen tile of the region that has none waiting.
  void spawn(State& s, int region, Rng& rng) const {
    const auto& candidates = region_tiles_[region];
    if (candidates.empty()) return;
    if (uniform01(rng) >= params_.spawn_probability) return;
    std::array<int, 64> open{};
    std::size_t count = 0;
    for (int t : candidates)
      if (!(s.board >> t & 1ULL)) open[count++] = t;
    if (count == 0) return;
    s.board |= 1ULL << open[uniform_index(rng, count)];
  }

  int pick_destination(int region, int here, Rng& rng) const {
    const auto& candidates = region_tiles_[region - 1];
    if (candidates.size() == 1) return candidates.front();
    std::size_t k = uniform_index(rng, candidates.size() - 1);
    int dest = candidates[k];
    if (dest == here) dest = candidates.back();
    return dest;
  }

  TaxiParams params_;
  int width_ = 0;
  int height_ = 0;
  int start_ = 0;
  std::vector<Tile> tiles_;
  std::array<std::vector<int>, 2> region_tiles_;
  std::vector<int> free_index_;
};

static_assert(SampledModel<TaxiEnvironment>);

inline TaxiEnvironment make_taxi(std::string_view map = kDefaultTaxiMap, TaxiParams params = {}) {
  return TaxiEnvironment(map, params);
}

}  // namespace mfg
