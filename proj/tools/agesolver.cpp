// agesolver: solve, verify, inspect and serve age-partitioned 2048 databases.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "agesolver/analytics.hpp"
#include "agesolver/error.hpp"
#include "agesolver/pipeline.hpp"
#include "agesolver/service.hpp"
#include "agesolver/store.hpp"
#include "agesolver/verify.hpp"

namespace fs = std::filesystem;
using namespace agesolver;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return 2;
    case ErrorCategory::io: return 3;
    case ErrorCategory::integrity: return 4;
    case ErrorCategory::encoding: return 5;
    case ErrorCategory::not_found: return 6;
  }
  return 1;
}

std::optional<Geometry> geometry_arg(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return Geometry::parse(text);
}

// --db falls back to $AGESOLVER_DB.
fs::path db_arg(const std::string& text) {
  if (!text.empty()) return text;
  if (const char* env = std::getenv("AGESOLVER_DB"); env && *env) return env;
  throw UsageError("no database directory; pass --db or set AGESOLVER_DB");
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strong solver for 2048-family games on small boards"};
  app.require_subcommand(1);

  std::string geometry_text, db_text, variant_text = "standard";
  int workers = 1;

  auto* solve = app.add_subcommand("solve", "forward enumeration then backward value iteration");
  std::optional<std::uint64_t> max_age;
  int value_scale = kDefaultValueScale;
  std::optional<int> value_bytes;
  solve->add_option("--geometry", geometry_text, "board as RxC")->required();
  solve->add_option("--db", db_text, "database directory");
  solve->add_option("--max-age", max_age, "stop the forward pass after this age");
  solve->add_option("--variant", variant_text, "standard | optimistic | pessimistic");
  solve->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  solve->add_option("--value-scale", value_scale, "values are stored as round(v * 2^S)")
      ->check(CLI::Range(0, 52));
  solve->add_option("--value-bytes", value_bytes, "fixed width of stored values (1-8)")
      ->check(CLI::Range(1, 8));

  auto* verify = app.add_subcommand("verify", "check digests, closure and stored values");
  bool against_oracle = false;
  std::size_t samples = 6;
  verify->add_option("--db", db_text, "database directory");
  verify->add_option("--geometry", geometry_text, "board as RxC");
  verify->add_flag("--against-oracle", against_oracle, "diff against the exhaustive oracle");
  verify->add_option("--samples", samples, "ages sampled for closure and value checks");
  verify->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  auto* stats = app.add_subcommand("stats", "export per-age statistics as CSV");
  std::string out_text;
  stats->add_option("--db", db_text, "database directory");
  stats->add_option("--geometry", geometry_text, "board as RxC");
  stats->add_option("--out", out_text, "CSV file (default: stdout)");
  stats->add_option("--variant", variant_text, "value variant used for value columns");
  stats->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  auto* query = app.add_subcommand("query", "best action and action values for one board");
  std::string board_text;
  query->add_option("--db", db_text, "database directory");
  query->add_option("--geometry", geometry_text, "board as RxC");
  query->add_option("--board", board_text, "board text, e.g. \"2 2 . / . . .\"")->required();
  query->add_option("--variant", variant_text, "value variant");

  auto* serve = app.add_subcommand("serve", "JSON lookup service over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  int ttl = 3600;
  serve->add_option("--db", db_text, "database directory");
  serve->add_option("--geometry", geometry_text, "board as RxC");
  serve->add_option("--host", host, "listen address");
  serve->add_option("--port", port, "listen port");
  serve->add_option("--variant", variant_text, "value variant");
  serve->add_option("--session-ttl", ttl, "idle session expiry in seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::usage);
  }

  try {
    const Variant variant = parse_variant(variant_text);
    if (*solve) {
      SolveOptions opt{Geometry::parse(geometry_text), db_arg(db_text), max_age, variant, workers,
                       value_scale, value_bytes};
      const auto out = solve_to_disk(opt, &std::cout);
      std::cout << "total_states=" << out.index.total_states
                << " total_afterstates=" << out.index.total_afterstates << "\n";
      return 0;
    }
    const fs::path db_path = db_arg(db_text);
    if (*verify) {
      const Database db = Database::open(db_path, geometry_arg(geometry_text));
      VerifyOptions opt{samples, against_oracle, workers};
      verify_database(db, opt, &std::cout);
      std::cout << "ok\n";
      return 0;
    }
    if (*stats) {
      const Database db = Database::open(db_path, geometry_arg(geometry_text));
      std::vector<std::uint64_t> ages;
      for (const auto& a : db.index().ages) ages.push_back(a.age);
      std::function<std::vector<double>(std::uint64_t)> load_values;
      if (db.has_values(variant))
        load_values = [&](std::uint64_t age) { return db.values(age, variant)->dequantized(); };
      const auto rows = compute_all_stats(
          db.geometry(), ages, [&](std::uint64_t age) { return db.codes(age); }, load_values,
          workers);
      if (out_text.empty())
        write_stats_csv(std::cout, rows);
      else
        export_stats_csv(rows, out_text);
      return 0;
    }
    if (*query) {
      LookupService service(std::chrono::hours(1), variant);
      service.load(db_path, geometry_arg(geometry_text));
      const Reply r = service.evaluate(board_text, std::nullopt);
      if (r.status == 400) throw EncodingError(r.body["error"].get<std::string>());
      if (r.status == 404) throw NotFoundError(r.body["error"].get<std::string>());
      const auto& e = r.body;
      if (e["terminal"].get<bool>()) {
        std::cout << "terminal\n";
        return 0;
      }
      std::cout << "board=" << e["board"].get<std::string>() << "\n";
      for (const auto& a : e["valid_actions"])
        std::cout << a["direction"].get<std::string>() << " reward=" << a["reward"].get<int>()
                  << " afterstate_value=" << format_value(a["afterstate_value"].get<double>())
                  << " q=" << format_value(a["q"].get<double>()) << "\n";
      std::cout << "best=" << e["best"].get<std::string>()
                << " state_value=" << format_value(e["state_value"].get<double>()) << "\n";
      return 0;
    }
    if (*serve) {
      LookupService service(std::chrono::seconds(ttl), variant);
      service.load(db_path, geometry_arg(geometry_text));
      httplib::Server server;
      service.mount(server);
      std::cout << "serving " << service.health().body["geometry"].get<std::string>() << " on "
                << host << ":" << port << std::endl;
      if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << category_name(e.category()) << "/ " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "IO/ " << e.what() << "\n";
    return exit_code(ErrorCategory::io);
  } catch (const std::bad_alloc&) {
    std::cerr << "IO/ out of memory\n";
    return exit_code(ErrorCategory::io);
  }
  return 0;
}
