#include <doctest.h>

#include <cmath>

#include "remask/text.hpp"
#include "synthetic.hpp"

using namespace remask;

TEST_CASE("stopwords and content tokens") {
  CHECK(is_stopword("the"));
  CHECK(is_stopword("may"));
  CHECK_FALSE(is_stopword("not"));
  CHECK(is_content_token("not"));
  CHECK(is_content_token("vaccines"));
  CHECK_FALSE(is_content_token("."));
  CHECK_FALSE(is_content_token("[EOS]"));
  CHECK(is_content_token("barré"));
}

TEST_CASE("sentence spans end at terminators") {
  std::vector<std::string> s = {"a", "b", ".", "c", "!", "d"};
  auto spans = sentence_spans(s);
  REQUIRE(spans.size() == 3);
  CHECK(spans[0] == std::pair<std::size_t, std::size_t>{0, 3});
  CHECK(spans[1] == std::pair<std::size_t, std::size_t>{3, 5});
  CHECK(spans[2] == std::pair<std::size_t, std::size_t>{5, 6});
  CHECK(sentence_spans(std::vector<std::string>{}).empty());
  std::vector<std::string> none = {"x", "y"};
  CHECK(sentence_spans(none).size() == 1);
}

TEST_CASE("idf matches the smoothed formula") {
  std::vector<std::string> docs = {"alpha beta", "alpha gamma", "delta"};
  IdfTable idf(docs);
  CHECK(idf.documents() == 3);
  CHECK(idf.idf("alpha") == doctest::Approx(std::log(4.0 / 3.0) + 1.0).epsilon(1e-12));
  CHECK(idf.idf("beta") == doctest::Approx(std::log(4.0 / 2.0) + 1.0).epsilon(1e-12));
  CHECK(idf.idf("unseen") == doctest::Approx(std::log(4.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("support set covers claims and evidence content") {
  auto inst = testing::vaccine_instance();
  auto support = support_set(inst);
  CHECK(support.count("rotashield"));
  CHECK(support.count("vaccination"));
  CHECK_FALSE(support.count("the"));
  CHECK_FALSE(support.count("mandatory-free"));
}
