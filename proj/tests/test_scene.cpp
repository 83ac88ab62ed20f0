#include <doctest.h>

#include "ssda/error.hpp"
#include "ssda/scene.hpp"

using namespace ssda;

TEST_CASE("parse_scene_name on underscore-delimited names") {
  const SceneMeta m = parse_scene_name("20160604_FIRE_rm-n-mobo-c");
  CHECK(m.date == Date{2016, 6, 4});
  CHECK(m.fire_name == "FIRE");
  CHECK(m.camera_name == "rm-n-mobo-c");
  CHECK(m.raw == "20160604_FIRE_rm-n-mobo-c");

  const SceneMeta lilac = parse_scene_name("20171207_Lilac_rm-s-mobo");
  CHECK(lilac.date == Date{2017, 12, 7});
  CHECK(lilac.fire_name == "Lilac");
  CHECK(lilac.camera_name == "rm-s-mobo");

  const SceneMeta iq = parse_scene_name("20160619_FIRE_lp-e-iqeye");
  CHECK(iq.camera_name == "lp-e-iqeye");

  const SceneMeta station = parse_scene_name("20190813_Topanga_69bravo-n-mobo");
  CHECK(station.fire_name == "Topanga");
  CHECK(station.camera_name == "69bravo-n-mobo");
}

TEST_CASE("parse_scene_name on dash-delimited names") {
  const SceneMeta m = parse_scene_name("20200906-BobcatFire-wilson-e-mobo-c");
  CHECK(m.date == Date{2020, 9, 6});
  CHECK(m.fire_name == "BobcatFire");
  CHECK(m.camera_name == "wilson-e-mobo-c");

  // fire names may themselves contain dashes
  const SceneMeta jim = parse_scene_name("20220302-Jimfire-0921-stgo-e-mobo-c");
  CHECK(jim.fire_name == "Jimfire-0921");
  CHECK(jim.camera_name == "stgo-e-mobo-c");

  const SceneMeta lyons = parse_scene_name("20210810-Lyonsfire-housefire-lp-n-mobo-c");
  CHECK(lyons.fire_name == "Lyonsfire-housefire");
  CHECK(lyons.camera_name == "lp-n-mobo-c");

  // mixed: '_' after the date, '-' between fire and camera
  const SceneMeta mixed = parse_scene_name("20190814_FIRE-pi-s-mobo-c");
  CHECK(mixed.fire_name == "FIRE");
  CHECK(mixed.camera_name == "pi-s-mobo-c");
}

TEST_CASE("parse_scene_name handles long fire names and numbered stations") {
  const SceneMeta m = parse_scene_name("20201202_WillowFire-nightime-near-CDF-HQ_lp-w-mobo-c");
  CHECK(m.fire_name == "WillowFire-nightime-near-CDF-HQ");
  CHECK(m.camera_name == "lp-w-mobo-c");

  const SceneMeta smer = parse_scene_name("20160604_FIRE_smer-tcs3-mobo-c");
  CHECK(smer.camera_name == "smer-tcs3-mobo-c");

  // zero-image scenes from the appendix parse like any other
  const SceneMeta zero = parse_scene_name("20200905_ValleyFire_cp-s-mobo-c");
  CHECK(zero.fire_name == "ValleyFire");
}

TEST_CASE("parse_scene_name rejects malformed input") {
  CHECK_THROWS_AS(parse_scene_name("notadate_x_y"), ParseError);
  CHECK_THROWS_AS(parse_scene_name(""), ParseError);
  CHECK_THROWS_AS(parse_scene_name("2016_FIRE_rm-n-mobo-c"), ParseError);
  CHECK_THROWS_AS(parse_scene_name("20161332_FIRE_rm-n-mobo-c"), ParseError);  // month 13
  CHECK_THROWS_AS(parse_scene_name("20150229_FIRE_rm-n-mobo-c"), ParseError);  // not a leap year
  CHECK_THROWS_AS(parse_scene_name("20160604"), ParseError);
  CHECK_THROWS_AS(parse_scene_name("20160604_FIRE_rm-n-mobo-x"), ParseError);  // unknown suffix
}

TEST_CASE("leap day parses in leap years") {
  const SceneMeta m = parse_scene_name("20160229_FIRE_rm-n-mobo-c");
  CHECK(m.date == Date{2016, 2, 29});
}

TEST_CASE("rejoin reproduces the raw name") {
  const char* names[] = {
      "20160604_FIRE_rm-n-mobo-c",
      "20171207_Lilac_rm-s-mobo",
      "20160619_FIRE_lp-e-iqeye",
      "20200906-BobcatFire-wilson-e-mobo-c",
      "20220302-Jimfire-0921-stgo-e-mobo-c",
      "20190814_FIRE-pi-s-mobo-c",
      "20201202_WillowFire-nightime-near-CDF-HQ_lp-w-mobo-c",
      "20220405-fire-in-Fallbrook-rm-s-mobo-m",
      "20190813_FIRE_69bravo-e-mobo-c",
      "20170625_BBM_bm-n-mobo",
  };
  for (const char* name : names) {
    const SceneMeta m = parse_scene_name(name);
    CHECK(m.rejoin() == name);
  }
}

TEST_CASE("classify_domain by scene and by camera") {
  const std::set<std::string> source_scenes = {
      "20160604_FIRE_rm-n-mobo-c",  "20160604_FIRE_smer-tcs3-mobo-c", "20160619_FIRE_lp-e-iqeye",
      "20160619_FIRE_om-e-mobo-c",  "20160619_FIRE_pi-s-mobo-c",      "20160711_FIRE_ml-n-mobo-c",
      "20160718_FIRE_lp-n-iqeye",   "20160718_FIRE_mg-s-iqeye",       "20160718_FIRE_mw-e-mobo-c",
  };
  CHECK(classify_domain(parse_scene_name("20160619_FIRE_lp-e-iqeye"), source_scenes) == Domain::source);
  CHECK(classify_domain(parse_scene_name("20170711_FIRE_bl-e-mobo-c"), source_scenes) == Domain::target);

  const std::set<std::string> source_cameras = {"rm-n-mobo-c", "lp-e-iqeye"};
  CHECK(classify_domain(parse_scene_name("20180504_FIRE_rm-n-mobo-c"), source_cameras,
                        DomainMode::by_camera) == Domain::source);
  CHECK(classify_domain(parse_scene_name("20180504_FIRE_bh-n-mobo-c"), source_cameras,
                        DomainMode::by_camera) == Domain::target);
}
