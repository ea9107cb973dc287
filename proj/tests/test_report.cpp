#include <doctest.h>

#include "uptodate/report/report.hpp"

using namespace uptodate;
using namespace uptodate::report;
using harness::AggregateRow;
using harness::AggregateTable;

namespace {

AggregateRow row(const std::string& id, const std::string& display, core::MetricMap mean) {
  AggregateRow r;
  r.method = id;
  r.display = display;
  r.count = 30;
  r.mean = std::move(mean);
  return r;
}

AggregateTable openset_closed_only() {
  return {"openset",
          {row("closed_set", "Closed-set",
               {{"unk", 0}, {"new", 0}, {"false", 0}, {"model", 0}, {"forget", 0}, {"created", 0}, {"mixed_acc", 0}})}};
}

AggregateTable routine_reference() {
  auto r = [](const std::string& id, const std::string& d, double succ, double len, double time, double comp,
              double fail) {
    return row(id, d, {{"succ", succ}, {"len", len}, {"time", time}, {"comp", comp}, {"fail", fail}, {"solved", 1}});
  };
  return {"routine",
          {r("fixed_routine", "Fixed routine", 0, 13, 0, 0, 0), r("random_search", "Random search", 0.067, 4.27, 10, 0.671, 0.933),
           r("rl_like", "RL-like", 1, 4, 3.9, 0.692, 0.293), r("proposed", "Proposed", 1, 4, 5, 1.0 - 4.0 / 13.0, 0)}};
}

std::vector<std::string> data_values(const std::string& svg) {
  std::vector<std::string> out;
  const std::string key = "data-value=\"";
  for (std::size_t p = svg.find(key); p != std::string::npos; p = svg.find(key, p + 1)) {
    const std::size_t s = p + key.size();
    out.push_back(svg.substr(s, svg.find('"', s) - s));
  }
  return out;
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("fixed three-decimal rendering") {
    CHECK(fmt3(1.0 - 4.0 / 13.0) == "0.692");
    CHECK(fmt3(13) == "13.000");
    CHECK(fmt3(-0.0001) == "0.000");
  }

  TEST_CASE("openset table with only the closed-set row") {
    const std::string t = render_table(openset_closed_only());
    CHECK(t == "Method       Unk.    New  False  Model  Forget\n"
               "Closed-set  0.000  0.000  0.000  0.000   0.000\n");
    CHECK(render_csv(openset_closed_only()) == "method,unk,new,false,model,forget\nclosed_set,0.000,0.000,0.000,0.000,0.000\n");
  }

  TEST_CASE("column short-names for every scenario") {
    const std::map<std::string, std::string> headers = {
        {"feature", "Acc. Disc. False Steps"},
        {"openset", "Unk. New False Model Forget"},
        {"routine", "Succ. Len. Time Comp. Fail"},
        {"evidence", "Useful Cost Repeat Think Scope"}};
    for (const auto& [sc, expect] : headers) {
      std::string got;
      for (const auto& c : harness::scenario(sc).table_columns()) got += (got.empty() ? "" : " ") + c.header;
      CHECK(got == expect);
    }
  }

  TEST_CASE("routine compression chart encodes the aggregate values") {
    const auto charts = charts_for(routine_reference());
    REQUIRE(charts.size() == 2);
    CHECK(charts[1].file_name == "routine_compression.svg");
    const std::string svg = render_svg(charts[1]);
    CHECK(data_values(svg) == std::vector<std::string>{"0.000", "0.671", "0.692", "0.692"});
    CHECK(svg == render_svg(charts_for(routine_reference())[1]));
    // Height is value * 220 px on a unit axis.
    CHECK(svg.find("height=\"152.24\"") != std::string::npos);
  }

  TEST_CASE("zero aggregates give zero-height bars") {
    AggregateTable t = openset_closed_only();
    for (const auto& chart : charts_for(t)) {
      const std::string svg = render_svg(chart);
      CHECK(svg.find("nan") == std::string::npos);
      CHECK(svg.find("inf") == std::string::npos);
      CHECK(svg.find("height=\"0.00\"") != std::string::npos);
    }
  }

  TEST_CASE("axis grows past 1 for counts and lengths") {
    const auto charts = charts_for(routine_reference());
    const std::string svg = render_svg(charts[0]);
    CHECK(svg.find(">13.000</text>") != std::string::npos);
    // Len 13 on a 13-unit axis fills the plot height.
    CHECK(svg.find("height=\"220.00\"") != std::string::npos);
  }

  TEST_CASE("labels are escaped") {
    Chart c{"x.svg", "a<b & \"c\"", {{"p", "y", {{"R&D", 0.5}}}}};
    const std::string svg = render_svg(c);
    CHECK(svg.find("a&lt;b &amp; &quot;c&quot;") != std::string::npos);
    CHECK(svg.find("data-label=\"R&amp;D\"") != std::string::npos);
  }
}
