#include <charconv>
#include <cmath>
#include <fstream>

#include "disco/data.hpp"

namespace disco {
namespace {

constexpr std::string_view kBom = "\xEF\xBB\xBF";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

// Calls fn(line, line_number) for every line, with the BOM and a trailing CR removed.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 && std::string_view(line).starts_with(kBom)) line.erase(0, kBom.size());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(std::string_view(line), number);
  }
  if (in.bad()) throw DataError("read error in " + path.string());
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cols;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

std::vector<std::string_view> columns(const std::filesystem::path& path, std::string_view line, std::size_t number,
                                      std::size_t expected) {
  auto cols = split_tabs(line);
  if (cols.size() != expected) {
    throw DataError(where(path, number) + "expected " + std::to_string(expected) + " tab-separated columns, got " +
                        std::to_string(cols.size()) + " (line " + std::to_string(number) + ")",
                    number);
  }
  return cols;
}

std::string require_text(const std::filesystem::path& path, std::string_view field, std::size_t number,
                         const char* what) {
  const auto t = trim(field);
  if (t.empty()) throw DataError(where(path, number) + "empty " + std::string(what) + " (line " + std::to_string(number) + ")", number);
  return std::string(t);
}

template <typename Range, typename Fn>
void write_lines(const std::filesystem::path& path, const Range& items, Fn&& render) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& item : items) out << render(item) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

UnlabeledCorpus load_unlabeled(const std::filesystem::path& path) {
  UnlabeledCorpus corpus;
  corpus.source = path.string();
  for_each_line(path, [&](std::string_view line, std::size_t) {
    const auto t = trim(line);
    if (!t.empty()) corpus.sentences.emplace_back(t);
  });
  if (corpus.sentences.empty()) throw DataError(path.string() + ": no sentences");
  return corpus;
}

std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
  std::vector<Triplet> triplets;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (trim(line).empty()) return;
    const auto cols = columns(path, line, number, 3);
    triplets.push_back(Triplet{require_text(path, cols[0], number, "anchor"),
                               require_text(path, cols[1], number, "positive"),
                               require_text(path, cols[2], number, "negative")});
  });
  return triplets;
}

StsPairSet load_sts(const std::filesystem::path& path, std::string name) {
  StsPairSet set;
  set.name = std::move(name);
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (trim(line).empty()) return;
    const auto cols = columns(path, line, number, 3);
    const auto score_text = trim(cols[2]);
    double score = 0.0;
    const auto [ptr, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
    if (ec != std::errc() || ptr != score_text.data() + score_text.size() || score_text.empty() || !std::isfinite(score)) {
      throw DataError(where(path, number) + "unparseable gold score '" + std::string(score_text) + "' (line " +
                          std::to_string(number) + ")",
                      number);
    }
    set.pairs.push_back(StsPair{require_text(path, cols[0], number, "sentence A"),
                                require_text(path, cols[1], number, "sentence B"), score});
  });
  return set;
}

void write_unlabeled(const std::filesystem::path& path, const std::vector<std::string>& sentences) {
  write_lines(path, sentences, [](const std::string& s) { return s; });
}

void write_triplets(const std::filesystem::path& path, const std::vector<Triplet>& triplets) {
  write_lines(path, triplets, [](const Triplet& t) { return t.anchor + '\t' + t.positive + '\t' + t.negative; });
}

void write_sts(const std::filesystem::path& path, const std::vector<StsPair>& pairs) {
  write_lines(path, pairs, [](const StsPair& p) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), p.gold);
    return p.first + '\t' + p.second + '\t' + std::string(buf, end);
  });
}

}  // namespace disco
