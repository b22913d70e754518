#pragma once

// Board geometry, packed state codes, move semantics, the spawn model,
// symmetry canonicalization and the age function.
//
// A board of rows x cols cells is packed into 64 bits, one 4-bit exponent
// per cell in row-major order from the top-left corner: cell i (0-based here)
// occupies bits [4i, 4i + 4). Exponent 0 is an empty cell, otherwise the tile
// is 2^exponent.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "agesolver/error.hpp"

namespace agesolver {

struct StateCode {
  std::uint64_t packed = 0;
  constexpr auto operator<=>(const StateCode&) const = default;
};

inline constexpr int kMaxCells = 14;

enum class Direction : std::uint8_t { left = 0, right = 1, up = 2, down = 3 };

inline constexpr std::array<Direction, 4> kDirections{Direction::left, Direction::right,
                                                      Direction::up, Direction::down};

constexpr int index_of(Direction d) { return static_cast<int>(d); }

inline std::string_view to_string(Direction d) {
  constexpr std::array<std::string_view, 4> names{"left", "right", "up", "down"};
  return names[index_of(d)];
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  for (auto d : kDirections)
    if (to_string(d) == s) return d;
  return std::nullopt;
}

/// Small bitmask over the four directions.
struct DirectionSet {
  std::uint8_t bits = 0;

  constexpr void insert(Direction d) { bits |= std::uint8_t(1u << index_of(d)); }
  constexpr bool contains(Direction d) const { return (bits >> index_of(d)) & 1u; }
  constexpr bool empty() const { return bits == 0; }
  constexpr int size() const { return std::popcount(unsigned(bits)); }
  constexpr bool operator==(const DirectionSet&) const = default;
};

struct MoveOutcome {
  StateCode afterstate;
  std::uint32_t reward = 0;
  bool changed = false;
};

struct SpawnOutcome {
  StateCode state;
  double probability = 0.0;
  int exponent = 0;  // 1 for tile 2, 2 for tile 4
};

struct InitialState {
  StateCode state;
  double probability = 0.0;
};

/// Probability of the spawned tile being 2 or 4; placement is uniform over empty cells.
struct SpawnModel {
  static constexpr double p2 = 0.9;
  static constexpr double p4 = 0.1;
};

inline constexpr unsigned nibble(StateCode s, int cell) {
  return unsigned(s.packed >> (4 * cell)) & 0xFu;
}

inline constexpr StateCode with_nibble(StateCode s, int cell, unsigned value) {
  const std::uint64_t shift = 4u * unsigned(cell);
  return StateCode{(s.packed & ~(std::uint64_t{0xF} << shift)) | (std::uint64_t(value) << shift)};
}

/// Sum of tile numbers. Invariant under actions, +2 or +4 per spawn.
inline constexpr std::uint64_t age_of(StateCode s) {
  std::uint64_t age = 0;
  for (std::uint64_t p = s.packed; p != 0; p >>= 4)
    if (const unsigned e = unsigned(p & 0xF); e != 0) age += std::uint64_t{1} << e;
  return age;
}

namespace detail {

// Slides a line whose element 0 is on the destination side. Equal pairs are
// merged starting from the destination side; a merged tile never merges again.
// Returns the reward; sets overflow when a merge would exceed exponent 15.
inline std::uint32_t slide_line(std::span<std::uint8_t> line, bool& overflow) {
  std::array<std::uint8_t, 16> tiles{};
  std::size_t n = 0;
  for (auto e : line)
    if (e != 0) tiles[n++] = e;
  std::uint32_t reward = 0;
  std::size_t out = 0;
  for (std::size_t i = 0; i < n;) {
    if (i + 1 < n && tiles[i] == tiles[i + 1]) {
      const unsigned merged = tiles[i] + 1u;
      if (merged > 15) overflow = true;
      line[out++] = std::uint8_t(merged & 0xF);
      reward += std::uint32_t{1} << merged;
      i += 2;
    } else {
      line[out++] = tiles[i++];
    }
  }
  std::fill(line.begin() + std::ptrdiff_t(out), line.end(), std::uint8_t{0});
  return reward;
}

struct LineEntry {
  std::uint16_t out = 0;
  bool overflow = false;
  std::uint32_t reward = 0;
};

// Full move table for lines of at most four cells (16-bit key).
inline std::vector<LineEntry> build_line_table(int len) {
  std::vector<LineEntry> table(std::size_t{1} << (4 * len));
  std::array<std::uint8_t, 4> line{};
  for (std::size_t key = 0; key < table.size(); ++key) {
    for (int j = 0; j < len; ++j) line[j] = std::uint8_t((key >> (4 * j)) & 0xF);
    LineEntry& e = table[key];
    e.reward = slide_line(std::span(line.data(), std::size_t(len)), e.overflow);
    for (int j = 0; j < len; ++j) e.out |= std::uint16_t(line[j] << (4 * j));
  }
  return table;
}

struct GeometryTables {
  int rows = 0;
  int cols = 0;
  int cells = 0;
  // Per direction: line_count lines of line_len cells each, destination side first.
  std::array<std::vector<std::uint8_t>, 4> lines;
  std::array<int, 4> line_len{};
  std::array<int, 4> line_count{};
  std::array<std::shared_ptr<const std::vector<LineEntry>>, 4> line_table;
  // sym[t][byte][value]: contribution of one packed byte under transform t.
  std::vector<std::array<std::array<std::uint64_t, 256>, 7>> sym;
  std::vector<std::array<std::uint8_t, kMaxCells>> sym_map;  // cell -> transformed cell
};

}  // namespace detail

/// Board shape. Stored with rows >= cols; a geometry and its transpose are the same game.
class Geometry {
 public:
  Geometry(int rows, int cols) {
    if (rows < 1 || cols < 1) throw UsageError("geometry dimensions must be positive");
    if (rows < cols) std::swap(rows, cols);
    const int cells = rows * cols;
    if (cells < 2 || cells > kMaxCells)
      throw UsageError("geometry " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " must have between 2 and 14 cells");
    tables_ = build(rows, cols);
  }

  /// Parses "RxC" (e.g. "4x3").
  static Geometry parse(std::string_view text) {
    const auto x = text.find_first_of("xX");
    int r = 0, c = 0;
    if (x == std::string_view::npos ||
        std::from_chars(text.data(), text.data() + x, r).ec != std::errc{} ||
        std::from_chars(text.data() + x + 1, text.data() + text.size(), c).ec != std::errc{})
      throw UsageError("malformed geometry '" + std::string(text) + "', expected RxC");
    return Geometry(r, c);
  }

  int rows() const { return tables_->rows; }
  int cols() const { return tables_->cols; }
  int cell_count() const { return tables_->cells; }
  /// Largest exponent any reachable tile can carry.
  int max_exponent() const { return cell_count() + 1; }
  bool square() const { return rows() == cols(); }
  std::string name() const { return std::to_string(rows()) + "x" + std::to_string(cols()); }

  bool operator==(const Geometry& o) const { return rows() == o.rows() && cols() == o.cols(); }

  int cell(int r, int c) const { return r * cols() + c; }

  // ---------------------------------------------------------------- encoding

  StateCode encode_cells(std::span<const std::uint32_t> cells) const {
    if (int(cells.size()) != cell_count())
      throw EncodingError("expected " + std::to_string(cell_count()) + " cells, got " +
                          std::to_string(cells.size()));
    StateCode s;
    for (int i = 0; i < cell_count(); ++i) {
      const std::uint32_t v = cells[std::size_t(i)];
      if (v == 0) continue;
      if (!std::has_single_bit(v) || v == 1)
        throw EncodingError("tile " + std::to_string(v) + " is not a power of two >= 2");
      const int e = std::countr_zero(v);
      if (e > max_exponent())
        throw EncodingError("tile " + std::to_string(v) + " exceeds 2^" +
                            std::to_string(max_exponent()));
      s = with_nibble(s, i, unsigned(e));
    }
    return s;
  }

  std::vector<std::uint32_t> decode_cells(StateCode s) const {
    validate(s);
    std::vector<std::uint32_t> cells(static_cast<std::size_t>(cell_count()));
    for (int i = 0; i < cell_count(); ++i)
      if (const unsigned e = nibble(s, i)) cells[std::size_t(i)] = std::uint32_t{1} << e;
    return cells;
  }

  /// Throws IntegrityError when a nibble is out of range or set beyond the board.
  void validate(StateCode s) const {
    if (cell_count() < 16 && (s.packed >> (4 * cell_count())) != 0)
      throw IntegrityError("state code has nibbles beyond cell " + std::to_string(cell_count()));
    for (int i = 0; i < cell_count(); ++i)
      if (int(nibble(s, i)) > max_exponent())
        throw IntegrityError("state code nibble " + std::to_string(i + 1) + " exceeds " +
                             std::to_string(max_exponent()));
  }

  bool is_valid(StateCode s) const {
    try {
      validate(s);
      return true;
    } catch (const IntegrityError&) {
      return false;
    }
  }

  int empty_cells(StateCode s) const {
    int n = 0;
    for (int i = 0; i < cell_count(); ++i) n += nibble(s, i) == 0;
    return n;
  }

  // ------------------------------------------------------------------- moves

  MoveOutcome apply_action(StateCode s, Direction d) const {
    const auto& t = *tables_;
    const int dir = index_of(d);
    const int len = t.line_len[dir];
    const std::uint8_t* cells = t.lines[dir].data();
    const detail::LineEntry* table = t.line_table[dir] ? t.line_table[dir]->data() : nullptr;
    std::uint64_t out = 0;
    std::uint32_t reward = 0;
    for (int l = 0; l < t.line_count[dir]; ++l, cells += len) {
      if (table) {
        unsigned key = 0;
        for (int j = 0; j < len; ++j) key |= nibble(s, cells[j]) << (4 * j);
        const detail::LineEntry& e = table[key];
        if (e.overflow) throw EncodingError("merge exceeds the 4-bit exponent range");
        reward += e.reward;
        for (int j = 0; j < len; ++j)
          out |= std::uint64_t((e.out >> (4 * j)) & 0xF) << (4 * cells[j]);
      } else {
        std::array<std::uint8_t, kMaxCells> line{};
        for (int j = 0; j < len; ++j) line[std::size_t(j)] = std::uint8_t(nibble(s, cells[j]));
        bool overflow = false;
        reward += detail::slide_line(std::span(line.data(), std::size_t(len)), overflow);
        if (overflow) throw EncodingError("merge exceeds the 4-bit exponent range");
        for (int j = 0; j < len; ++j) out |= std::uint64_t(line[std::size_t(j)]) << (4 * cells[j]);
      }
    }
    return {StateCode{out}, reward, out != s.packed};
  }

  DirectionSet valid_actions(StateCode s) const {
    DirectionSet set;
    for (auto d : kDirections)
      if (apply_action(s, d).changed) set.insert(d);
    return set;
  }

  bool is_terminal(StateCode s) const { return valid_actions(s).empty(); }

  /// All (state, probability) results of spawning into an afterstate, in cell order,
  /// tile 2 before tile 4 for each cell.
  std::vector<SpawnOutcome> spawn_outcomes(StateCode afterstate) const {
    const int k = empty_cells(afterstate);
    if (k == 0) throw UsageError("spawn on an afterstate without empty cells");
    std::vector<SpawnOutcome> out;
    out.reserve(std::size_t(2 * k));
    for (int i = 0; i < cell_count(); ++i) {
      if (nibble(afterstate, i) != 0) continue;
      out.push_back({with_nibble(afterstate, i, 1), SpawnModel::p2 / k, 1});
      out.push_back({with_nibble(afterstate, i, 2), SpawnModel::p4 / k, 2});
    }
    return out;
  }

  /// Distribution over boards after two spawns on the empty board (not canonicalized).
  std::vector<InitialState> initial_states() const {
    const int n = cell_count();
    std::vector<InitialState> out;
    const std::array<double, 3> p{0.0, SpawnModel::p2, SpawnModel::p4};
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        for (unsigned a = 1; a <= 2; ++a)
          for (unsigned b = 1; b <= 2; ++b) {
            // Either cell may have been filled first.
            const double prob = 2.0 * p[a] * p[b] / (double(n) * double(n - 1));
            out.push_back({with_nibble(with_nibble(StateCode{}, i, a), j, b), prob});
          }
    return out;
  }

  // -------------------------------------------------------------- symmetry

  int symmetry_count() const { return int(tables_->sym.size()); }

  /// Applies symmetry transform t (0 is the identity).
  StateCode transform(StateCode s, int t) const {
    const auto& tab = tables_->sym[std::size_t(t)];
    std::uint64_t r = 0;
    const int bytes = (cell_count() + 1) / 2;
    for (int b = 0; b < bytes; ++b) r |= tab[std::size_t(b)][(s.packed >> (8 * b)) & 0xFF];
    return StateCode{r};
  }

  /// Minimum packed value over the symmetry orbit.
  StateCode canonicalize(StateCode s) const {
    StateCode best = s;
    for (int t = 1; t < symmetry_count(); ++t) best = std::min(best, transform(s, t));
    return best;
  }

  std::vector<StateCode> orbit(StateCode s) const {
    std::vector<StateCode> out;
    for (int t = 0; t < symmetry_count(); ++t) out.push_back(transform(s, t));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // ------------------------------------------------------------------- text

  /// Row-major text form, rows separated by " / ", '.' for empty cells.
  std::string format(StateCode s) const {
    std::string out;
    for (int r = 0; r < rows(); ++r) {
      if (r) out += " / ";
      for (int c = 0; c < cols(); ++c) {
        if (c) out += ' ';
        const unsigned e = nibble(s, cell(r, c));
        out += e ? std::to_string(std::uint32_t{1} << e) : std::string(".");
      }
    }
    return out;
  }

  /// Parses the text form. Rows are separated by '/' or newlines; '.' or 0 is empty.
  /// A board written in the transposed orientation is accepted and transposed.
  StateCode parse_board(std::string_view text) const {
    std::vector<std::vector<std::uint32_t>> grid(1);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      std::uint32_t v = 0;
      if (token != ".") {
        const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc{} || p != token.data() + token.size())
          throw EncodingError("bad board token '" + token + "'");
      }
      grid.back().push_back(v);
      token.clear();
    };
    for (char ch : text) {
      if (ch == '/' || ch == '\n' || ch == ';') {
        flush();
        grid.emplace_back();
      } else if (ch == ' ' || ch == '\t' || ch == ',' || ch == '\r') {
        flush();
      } else {
        token += ch;
      }
    }
    flush();
    std::erase_if(grid, [](const auto& row) { return row.empty(); });
    const int gr = int(grid.size());
    for (const auto& row : grid)
      if (int(row.size()) != int(grid.front().size()))
        throw EncodingError("board rows have different lengths");
    const int gc = gr ? int(grid.front().size()) : 0;
    std::vector<std::uint32_t> cells(static_cast<std::size_t>(cell_count()));
    if (gr == rows() && gc == cols()) {
      for (int r = 0; r < gr; ++r)
        for (int c = 0; c < gc; ++c) cells[std::size_t(cell(r, c))] = grid[r][c];
    } else if (gr == cols() && gc == rows()) {
      for (int r = 0; r < gr; ++r)
        for (int c = 0; c < gc; ++c) cells[std::size_t(cell(c, r))] = grid[r][c];
    } else {
      throw EncodingError("board is " + std::to_string(gr) + "x" + std::to_string(gc) +
                          ", expected " + name());
    }
    return encode_cells(cells);
  }

 private:
  static std::shared_ptr<const detail::GeometryTables> build(int rows, int cols) {
    auto t = std::make_shared<detail::GeometryTables>();
    t->rows = rows;
    t->cols = cols;
    t->cells = rows * cols;
    auto at = [cols](int r, int c) { return std::uint8_t(r * cols + c); };

    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        t->lines[index_of(Direction::left)].push_back(at(r, c));
        t->lines[index_of(Direction::right)].push_back(at(r, cols - 1 - c));
      }
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) {
        t->lines[index_of(Direction::up)].push_back(at(r, c));
        t->lines[index_of(Direction::down)].push_back(at(rows - 1 - r, c));
      }
    std::array<std::shared_ptr<const std::vector<detail::LineEntry>>, kMaxCells + 1> by_len;
    for (int dir = 0; dir < 4; ++dir) {
      const bool horizontal = dir < 2;
      t->line_len[dir] = horizontal ? cols : rows;
      t->line_count[dir] = horizontal ? rows : cols;
      const int len = t->line_len[dir];
      if (len <= 4) {
        if (!by_len[len])
          by_len[len] = std::make_shared<const std::vector<detail::LineEntry>>(
              detail::build_line_table(len));
        t->line_table[dir] = by_len[len];
      }
    }

    // (r, c) -> (r', c') for each symmetry; the last four only for square boards.
    using Map = std::array<int, 2> (*)(int, int, int, int);
    std::vector<Map> maps{
        [](int r, int c, int, int) { return std::array{r, c}; },
        [](int r, int c, int, int C) { return std::array{r, C - 1 - c}; },
        [](int r, int c, int R, int) { return std::array{R - 1 - r, c}; },
        [](int r, int c, int R, int C) { return std::array{R - 1 - r, C - 1 - c}; },
    };
    if (rows == cols) {
      maps.push_back([](int r, int c, int, int) { return std::array{c, r}; });
      maps.push_back([](int r, int c, int R, int C) { return std::array{C - 1 - c, R - 1 - r}; });
      maps.push_back([](int r, int c, int R, int) { return std::array{c, R - 1 - r}; });
      maps.push_back([](int r, int c, int, int C) { return std::array{C - 1 - c, r}; });
    }
    for (Map m : maps) {
      std::array<std::uint8_t, kMaxCells> cell_map{};
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const auto [r2, c2] = m(r, c, rows, cols);
          cell_map[at(r, c)] = at(r2, c2);
        }
      auto& tab = t->sym.emplace_back();
      for (int b = 0; b < 7; ++b)
        for (unsigned v = 0; v < 256; ++v) {
          std::uint64_t out = 0;
          const int lo = 2 * b, hi = 2 * b + 1;
          if (lo < t->cells) out |= std::uint64_t(v & 0xF) << (4 * cell_map[std::size_t(lo)]);
          if (hi < t->cells) out |= std::uint64_t(v >> 4) << (4 * cell_map[std::size_t(hi)]);
          tab[std::size_t(b)][v] = out;
        }
      t->sym_map.push_back(cell_map);
    }
    return t;
  }

  std::shared_ptr<const detail::GeometryTables> tables_;
};

}  // namespace agesolver
