#include "daywatch/calendar.hpp"

#include "doctest.h"

using daywatch::Date;
using daywatch::DateTime;

TEST_CASE("date parse and format round trip") {
  for (const char* text : {"2020-01-06", "1999-12-31", "2024-02-29", "2010-08-15"}) {
    CHECK(Date::parse(text).to_string() == text);
  }
}

TEST_CASE("date rejects malformed or impossible days") {
  CHECK_THROWS_AS(Date::parse("2020-13-01"), std::invalid_argument);
  CHECK_THROWS_AS(Date::parse("2021-02-29"), std::invalid_argument);
  CHECK_THROWS_AS(Date::parse("2020-00-10"), std::invalid_argument);
  CHECK_THROWS_AS(Date::parse("2020-1-06"), std::invalid_argument);
  CHECK_THROWS_AS(Date::parse("20-01-06"), std::invalid_argument);
  CHECK_THROWS_AS(Date::parse("garbage"), std::invalid_argument);
  CHECK_THROWS_AS(Date::from_ymd(2021, 4, 31), std::invalid_argument);
}

TEST_CASE("weekday classification") {
  CHECK(Date::parse("2020-01-06").is_weekday());   // Monday
  CHECK(Date::parse("2020-01-10").is_weekday());   // Friday
  CHECK(!Date::parse("2020-01-11").is_weekday());  // Saturday
  CHECK(!Date::parse("2020-01-12").is_weekday());  // Sunday
}

TEST_CASE("date arithmetic and ordering") {
  Date d = Date::parse("2020-02-27");
  CHECK(d.plus_days(3).to_string() == "2020-03-01");  // leap year
  CHECK(d < d.plus_days(1));
  CHECK(d == Date::parse("2020-02-27"));
}

TEST_CASE("datetime parse format round trip") {
  for (const char* text :
       {"01/02/2010 07:35:20", "12/31/1999 23:59:59", "02/29/2020 00:00:00"}) {
    CHECK(DateTime::parse(text).to_string() == text);
  }
}

TEST_CASE("datetime rejects bad fields") {
  CHECK_THROWS_AS(DateTime::parse("01/02/2010 24:00:00"), std::invalid_argument);
  CHECK_THROWS_AS(DateTime::parse("01/02/2010 07:60:00"), std::invalid_argument);
  CHECK_THROWS_AS(DateTime::parse("13/02/2010 07:00:00"), std::invalid_argument);
  CHECK_THROWS_AS(DateTime::parse("01/02/2010"), std::invalid_argument);
  CHECK_THROWS_AS(DateTime::parse("2010-01-02 07:35:20"), std::invalid_argument);
}

TEST_CASE("datetime ordering and day extraction") {
  DateTime a = DateTime::parse("01/02/2010 07:35:20");
  DateTime b = DateTime::parse("01/02/2010 07:35:21");
  DateTime c = DateTime::parse("01/03/2010 00:00:00");
  CHECK(a < b);
  CHECK(b < c);
  CHECK(a.date().to_string() == "2010-01-02");
  CHECK(a.second_of_day() == 7 * 3600 + 35 * 60 + 20);
  CHECK(a.plus_seconds(40).to_string() == "01/02/2010 07:36:00");
  CHECK(b.plus_seconds(24 * 3600).date().to_string() == "2010-01-03");
}
