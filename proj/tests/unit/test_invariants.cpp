#include <cctype>
#include <string>

#include <gtest/gtest.h>

#include <drmis/validate.hpp>

using namespace drmis;

namespace
{

class Invariant : public ::testing::TestWithParam<std::size_t>
{
};

std::string test_name(::testing::TestParamInfo<std::size_t> const& info)
{
    auto c = invariant_checks()[info.param];
    std::string s = c.module + "_";
    for (char ch : c.name)
        s += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
    return s;
}

}  // namespace

// Same seeds as the validate subcommand with its default seed.
TEST_P(Invariant, Holds)
{
    auto const& c = invariant_checks()[GetParam()];
    auto o = c.run(derive_seed(1, 0x7a11 + GetParam() + 1));
    EXPECT_TRUE(o.pass) << c.module << ": " << c.name << ": " << o.detail;
}

INSTANTIATE_TEST_SUITE_P(All, Invariant, ::testing::Range<std::size_t>(0, invariant_checks().size()), test_name);
