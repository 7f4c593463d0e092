#include "mre/ratings.hpp"

#include <gtest/gtest.h>

#include "mre/error.hpp"
#include "oracles.hpp"

namespace mre {
namespace {

RatingSet set_of(std::vector<RatingVector> rows) { return RatingSet(std::move(rows)); }

TEST(Schema, LidcHasNineCharacteristics) {
  const auto& s = CharacteristicSchema::lidc();
  ASSERT_EQ(s.size(), 9u);
  EXPECT_EQ(s.names()[kMalignancyIndex], "Malignancy");
  EXPECT_EQ(s.index_of("Calcification"), 2u);
  EXPECT_EQ(s.range(2).max, 6.0);
  EXPECT_THROW(s.index_of("Colour"), SchemaError);
}

TEST(Schema, ValidateRating) {
  const auto& s = CharacteristicSchema::lidc();
  EXPECT_NO_THROW(validate_rating(RatingVector(9, 3.0), s));
  EXPECT_THROW(validate_rating(RatingVector(8, 3.0), s), SchemaError);
  RatingVector bad(9, 3.0);
  bad[4] = 7.0;
  EXPECT_THROW(validate_rating(bad, s), SchemaError);
}

TEST(RatingSetTest, RejectsMalformedSets) {
  EXPECT_THROW(RatingSet(std::vector<RatingVector>{}), DomainError);
  EXPECT_THROW(RatingSet(std::vector<RatingVector>{{1.0, 2.0}, {1.0}}), SchemaError);
  EXPECT_THROW(RatingSet(std::vector<RatingVector>{{1.0}, {2.0}}, std::vector<double>{1.0}), DomainError);
  EXPECT_THROW(RatingSet(std::vector<RatingVector>{{1.0}}, std::vector<double>{-1.0}), DomainError);
}

TEST(RatingL2, SymmetricAndZeroOnEqual) {
  const std::vector<double> a = {1, 2, 3}, b = {4, 6, 3};
  EXPECT_EQ(rating_l2(a, b), 5.0);
  EXPECT_EQ(rating_l2(b, a), 5.0);
  EXPECT_EQ(rating_l2(a, a), 0.0);
  const std::vector<double> c = {1, 2};
  EXPECT_THROW(rating_l2(a, c), SchemaError);
}

TEST(SetDistance, HandCase) {
  EXPECT_EQ(set_distance(set_of({{1, 0}, {0, 1}}), set_of({{0, 0}})), 1.0);
}

TEST(SetDistance, SingletonsReduceToL2) {
  EXPECT_DOUBLE_EQ(set_distance(set_of({{0, 0}}), set_of({{3, 4}})), 5.0);
}

TEST(SetDistance, IdenticalSetsAreZero) {
  const auto s = set_of({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(set_distance(s, s), 0.0);
}

TEST(SetDistance, DuplicatesChangeTheMean) {
  // Not a metric: repeating a rating shifts the directed average.
  const auto a = set_of({{0, 0}, {4, 0}});
  const auto a_dup = set_of({{0, 0}, {0, 0}, {4, 0}});
  const auto b = set_of({{0, 0}});
  EXPECT_NE(set_distance(a, b), set_distance(a_dup, b));
}

TEST(SetDistance, MatchesBruteForceAndIsSymmetric) {
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const auto a = testing::random_rating_set(rng, 1 + rng.below(4));
    const auto b = testing::random_rating_set(rng, 1 + rng.below(4));
    const double d = set_distance(a, b);
    EXPECT_NEAR(d, testing::brute_force_set_distance(a.ratings(), b.ratings()), 1e-12);
    EXPECT_EQ(d, set_distance(b, a));
  }
}

TEST(SetDistance, DimensionMismatch) {
  EXPECT_THROW(set_distance(set_of({{1, 2}}), set_of({{1, 2, 3}})), SchemaError);
}

TEST(SetDistanceMatrix, ParallelIsBitIdentical) {
  Rng rng(7);
  std::vector<RatingSet> sets;
  for (int i = 0; i < 40; ++i) sets.push_back(testing::random_rating_set(rng, 1 + rng.below(4)));
  const Matrix seq = set_distance_matrix(sets, false);
  const Matrix par = set_distance_matrix(sets, true);
  EXPECT_TRUE(seq == par);
  EXPECT_NO_THROW(validate_distance_matrix(seq));
  EXPECT_EQ(seq(3, 17), set_distance(sets[3], sets[17]));
}

TEST(SetDistanceMatrix, NeedsTwoSets) {
  std::vector<RatingSet> one = {set_of({{1.0}})};
  EXPECT_THROW(set_distance_matrix(one), DomainError);
}

TEST(MeanRating, IgnoresWeights) {
  const RatingSet s({{1, 2}, {3, 6}}, std::vector<double>{10.0, 0.0});
  EXPECT_EQ(mean_rating(s), (RatingVector{2, 4}));
}

TEST(Malignancy, Thresholds) {
  EXPECT_EQ(malignancy_class(2.5), MalignancyClass::benign);
  EXPECT_EQ(malignancy_class(3.0), MalignancyClass::unknown);
  EXPECT_EQ(malignancy_class(3.5), MalignancyClass::malignant);
  EXPECT_EQ(malignancy_class_from_string(to_string(MalignancyClass::unknown)), MalignancyClass::unknown);
  EXPECT_THROW(malignancy_class_from_string("maybe"), FormatError);
}

TEST(DistanceMatrix, Validation) {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 1) = 1.0;
  EXPECT_THROW(validate_distance_matrix(m), DomainError);
  m(1, 0) = 1.0;
  EXPECT_NO_THROW(validate_distance_matrix(m));
  m(2, 2) = 0.5;
  EXPECT_THROW(validate_distance_matrix(m), DomainError);
  EXPECT_THROW(validate_distance_matrix(Matrix::Zero(2, 3)), DomainError);
}

TEST(PairwiseL2, KnownDistances) {
  Matrix p(3, 2);
  p << 0, 0, 3, 4, 0, 1;
  const Matrix d = pairwise_l2(p);
  EXPECT_EQ(d(0, 1), 5.0);
  EXPECT_EQ(d(2, 0), 1.0);
  EXPECT_EQ(d(1, 1), 0.0);
}

}  // namespace
}  // namespace mre
