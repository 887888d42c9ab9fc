// Line format (one record per line, tokens separated by spaces):
//
//   momdp v1 <S> <A> <m>
//   T <s> <a> <p_0> ... <p_{S-1}>        one per (s, a)
//   R <i> <s> <a> <s'> <value>           nonzero reward means only
//   G <i> <gamma>
//   N <i> <sigma>                        reward noise std
//   I <p_0> ... <p_{S-1}>
//   TERM <s> ...                         terminal states, possibly none
//   H <horizon>                          optional
//   B <rmax>                             declared reward bound
//
// Reals are written with 17 significant digits so that parsing restores the
// exact doubles.

#include "lexrl/momdp.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lexrl {

namespace {

void put_real(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, " %.17g", v);
  out += buf;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw FormatError("momdp text line " + std::to_string(line) + ": " + what);
}

struct LineReader {
  std::istringstream tokens;
  std::size_t line;

  long long integer(const char* what) {
    std::string tok;
    if (!(tokens >> tok)) parse_fail(line, std::string("missing ") + what);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (errno != 0 || *end != '\0') parse_fail(line, std::string("bad integer for ") + what);
    return v;
  }

  double real(const char* what) {
    std::string tok;
    if (!(tokens >> tok)) parse_fail(line, std::string("missing ") + what);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (*end != '\0') parse_fail(line, std::string("bad real for ") + what);
    return v;
  }

  bool at_end() {
    std::string tok;
    return !(tokens >> tok);
  }

  void expect_end() {
    if (!at_end()) parse_fail(line, "trailing tokens");
  }
};

Index checked_index(long long v, Index bound, std::size_t line, const char* what) {
  if (v < 0 || v >= bound) parse_fail(line, std::string(what) + " index out of range");
  return static_cast<Index>(v);
}

}  // namespace

std::string to_text(const Momdp& m) {
  std::string out;
  out += "momdp v1 " + std::to_string(m.num_states) + " " + std::to_string(m.num_actions) + " " +
         std::to_string(m.num_objectives) + "\n";
  for (Index s = 0; s < m.num_states; ++s) {
    for (Index a = 0; a < m.num_actions; ++a) {
      out += "T " + std::to_string(s) + " " + std::to_string(a);
      for (Index j = 0; j < m.num_states; ++j) put_real(out, m.transition(m.row(s, a), j));
      out += "\n";
    }
  }
  for (Index i = 0; i < m.num_objectives; ++i) {
    const TableXd& r = m.reward_mean[static_cast<std::size_t>(i)];
    for (Index s = 0; s < m.num_states; ++s)
      for (Index a = 0; a < m.num_actions; ++a)
        for (Index j = 0; j < m.num_states; ++j) {
          const double v = r(m.row(s, a), j);
          if (v == 0.0) continue;
          out += "R " + std::to_string(i) + " " + std::to_string(s) + " " + std::to_string(a) + " " +
                 std::to_string(j);
          put_real(out, v);
          out += "\n";
        }
  }
  for (Index i = 0; i < m.num_objectives; ++i) {
    out += "G " + std::to_string(i);
    put_real(out, m.discounts(i));
    out += "\nN " + std::to_string(i);
    put_real(out, m.reward_noise_sigma(i));
    out += "\n";
  }
  out += "I";
  for (Index s = 0; s < m.num_states; ++s) put_real(out, m.initial(s));
  out += "\nTERM";
  for (Index s = 0; s < m.num_states; ++s)
    if (m.terminal[static_cast<std::size_t>(s)]) out += " " + std::to_string(s);
  out += "\n";
  if (m.episode_horizon) out += "H " + std::to_string(*m.episode_horizon) + "\n";
  out += "B";
  put_real(out, m.reward_bound);
  out += "\n";
  return out;
}

Momdp momdp_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;

  auto next_content_line = [&](std::string& line) {
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  };

  if (!next_content_line(raw)) throw FormatError("momdp text: empty document");
  LineReader header{std::istringstream(raw), line_no};
  std::string magic, version;
  header.tokens >> magic >> version;
  if (magic != "momdp" || version != "v1") parse_fail(line_no, "expected header 'momdp v1 S A m'");
  const long long S = header.integer("|S|");
  const long long A = header.integer("|A|");
  const long long M = header.integer("m");
  header.expect_end();
  if (S <= 0 || A <= 0 || M <= 0 || A > kMaxActions) parse_fail(line_no, "bad dimensions");

  Momdp m = make_momdp(S, A, M);
  m.discounts.setZero();
  m.initial.setZero();
  std::vector<bool> row_seen(static_cast<std::size_t>(S * A), false);
  bool initial_seen = false;

  while (next_content_line(raw)) {
    LineReader r{std::istringstream(raw), line_no};
    std::string tag;
    r.tokens >> tag;
    if (tag == "T") {
      const Index s = checked_index(r.integer("state"), S, line_no, "state");
      const Index a = checked_index(r.integer("action"), A, line_no, "action");
      for (Index j = 0; j < S; ++j) m.transition(m.row(s, a), j) = r.real("probability");
      r.expect_end();
      row_seen[static_cast<std::size_t>(m.row(s, a))] = true;
    } else if (tag == "R") {
      const Index i = checked_index(r.integer("objective"), M, line_no, "objective");
      const Index s = checked_index(r.integer("state"), S, line_no, "state");
      const Index a = checked_index(r.integer("action"), A, line_no, "action");
      const Index j = checked_index(r.integer("next state"), S, line_no, "next state");
      m.reward_mean[static_cast<std::size_t>(i)](m.row(s, a), j) = r.real("reward");
      r.expect_end();
    } else if (tag == "G") {
      const Index i = checked_index(r.integer("objective"), M, line_no, "objective");
      m.discounts(i) = r.real("discount");
      r.expect_end();
    } else if (tag == "N") {
      const Index i = checked_index(r.integer("objective"), M, line_no, "objective");
      m.reward_noise_sigma(i) = r.real("sigma");
      r.expect_end();
    } else if (tag == "I") {
      for (Index s = 0; s < S; ++s) m.initial(s) = r.real("initial probability");
      r.expect_end();
      initial_seen = true;
    } else if (tag == "TERM") {
      std::string tok;
      while (r.tokens >> tok) {
        char* end = nullptr;
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (*end != '\0') parse_fail(line_no, "bad terminal state");
        m.terminal[static_cast<std::size_t>(checked_index(v, S, line_no, "terminal state"))] = true;
      }
    } else if (tag == "H") {
      const long long h = r.integer("horizon");
      if (h <= 0) parse_fail(line_no, "horizon must be positive");
      m.episode_horizon = h;
      r.expect_end();
    } else if (tag == "B") {
      m.reward_bound = r.real("reward bound");
      r.expect_end();
    } else {
      parse_fail(line_no, "unknown record tag '" + tag + "'");
    }
  }
  for (std::size_t k = 0; k < row_seen.size(); ++k)
    if (!row_seen[k])
      throw FormatError("momdp text: missing T line for (s, a) = (" + std::to_string(k / A) + ", " +
                        std::to_string(k % A) + ")");
  if (!initial_seen) throw FormatError("momdp text: missing I line");
  return m;
}

void save_momdp(const Momdp& momdp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << to_text(momdp);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Momdp load_momdp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return momdp_from_text(buf.str());
}

}  // namespace lexrl
