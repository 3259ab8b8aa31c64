#pragma once

// Frozen oracle vectors for the 13a tokenizer and the smoothed BLEU
// scorer, generated once by tests/support/gen_bleu_vectors.py.

#include <string>
#include <vector>

namespace bleu_vectors {

struct TokenizerCase { const char* input; const char* expected; };

inline const std::vector<TokenizerCase>& tokenizer_cases() {
  static const std::vector<TokenizerCase> cases = {
      {"Hello, world!", "Hello , world !"},
      {"3.5", "3.5"},
      {"abc", "abc"},
      {"", ""},
      {"a  b\t c", "a b c"},
      {"don't stop", "don't stop"},
      {"x&amp;y", "x & y"},
      {"&quot;quoted&quot;", "\" quoted \""},
      {"&lt;tag&gt;", "< tag >"},
      {"a<skipped>b", "ab"},
      {"line-\nbreak", "linebreak"},
      {"new\nline", "new line"},
      {"100,000.5 items", "100,000.5 items"},
      {"pi is 3.14159.", "pi is 3.14159 ."},
      {"1,2,3", "1,2,3"},
      {"(parens) [brackets] {braces}", "( parens ) [ brackets ] { braces }"},
      {"semi;colon: and @at #hash $dollar %pct ^caret &amp; *star", "semi ; colon : and @ at # hash $ dollar % pct ^ caret & * star"},
      {"slash/slash\\back", "slash / slash \\ back"},
      {"question? bang! mix?!", "question ? bang ! mix ? !"},
      {"digits 12-34 and 5-speed", "digits 12 - 34 and 5 - speed"},
      {"non-digit-dash stays", "non-digit-dash stays"},
      {"ellipsis... and .. and .", "ellipsis . . . and . . and ."},
      {"comma, at, many, places,", "comma , at , many , places ,"},
      {",leading and trailing,", ", leading and trailing ,"},
      {".start and end.", ". start and end ."},
      {"quote'inside and 'outside'", "quote'inside and 'outside'"},
      {"double\"quote\"test", "double \" quote \" test"},
      {"equal=sign less<more>greater", "equal = sign less < more > greater"},
      {"plus+minus-times*div/", "plus + minus-times * div /"},
      {"under_score back`tick tilde~", "under _ score back ` tick tilde ~"},
      {"pipe|bar", "pipe | bar"},
      {"caf\xc3\xa9" " na\xc3\xaf" "ve r\xc3\xa9" "sum\xc3\xa9" "", "caf\xc3\xa9" " na\xc3\xaf" "ve r\xc3\xa9" "sum\xc3\xa9" ""},
      {"stra\xc3\x9f" "e gr\xc3\xbc" "\xc3\x9f" "e", "stra\xc3\x9f" "e gr\xc3\xbc" "\xc3\x9f" "e"},
      {"\xc2\xbf" "verdad? \xc2\xa1" "claro!", "\xc2\xbf" "verdad ? \xc2\xa1" "claro !"},
      {"\xe2\x80\x9c" "curly quotes\xe2\x80\x9d" " and \xe2\x80\x98" "single\xe2\x80\x99" "", "\xe2\x80\x9c" "curly quotes\xe2\x80\x9d" " and \xe2\x80\x98" "single\xe2\x80\x99" ""},
      {"em\xe2\x80\x94" "dash en\xe2\x80\x93" "dash", "em\xe2\x80\x94" "dash en\xe2\x80\x93" "dash"},
      {"\xc2\xab" "french guillemets\xc2\xbb" "", "\xc2\xab" "french guillemets\xc2\xbb" ""},
      {"mixed 3.5x and x3.5 and 3x.5", "mixed 3.5x and x3.5 and 3x . 5"},
      {"3 . 5 spaced dot", "3 . 5 spaced dot"},
      {"ordinal 1. 2. 3.", "ordinal 1 . 2 . 3 ."},
      {"decimal .5 and 5.", "decimal . 5 and 5 ."},
      {"money $3.50 and 100,00 euro", "money $ 3.50 and 100,00 euro"},
      {"A.B.C. acronym", "A . B . C . acronym"},
      {"U.S.A.", "U . S . A ."},
      {"e.g., i.e., etc.", "e . g . , i . e . , etc ."},
      {"time 12:30:45", "time 12 : 30 : 45"},
      {"ratio 3:2", "ratio 3 : 2"},
      {"url http://example.com/path?q=1&amp;r=2", "url http : / / example . com / path ? q = 1 & r = 2"},
      {"email user@example.com", "email user @ example . com"},
      {"emoji \xf0\x9f\x98\x80" " stays", "emoji \xf0\x9f\x98\x80" " stays"},
      {"tab\tseparated\tfields", "tab separated fields"},
      {"nbsp\xc2\xa0" "space", "nbsp space"},
      {"thin\xe2\x80\x89" "space", "thin space"},
      {"ideographic\xe3\x80\x80" "space", "ideographic space"},
      {"mixed   \t  whitespace   runs", "mixed whitespace runs"},
      {"hyphen-2-hyphen", "hyphen-2 - hyphen"},
      {"2-hyphen-2", "2 - hyphen-2"},
      {"a,1 1,a a.1 1.a", "a , 1 1 , a a . 1 1 . a"},
      {"!leading bang and trailing!", "! leading bang and trailing !"},
  };
  return cases;
}

struct CorpusCase {
  const char* name;
  std::vector<std::string> hypotheses;
  std::vector<std::string> references;
  bool cased;
  double expected_bleu;
};

inline const std::vector<CorpusCase>& corpus_cases() {
  static const std::vector<CorpusCase> cases = {
      {"identity",
       {"green 3.5 blue 3.5 house sat mat", "a mat fast, cat fast, on", "a tree. mat fast, cat green dog on the", "the fast, green mat the world!", "blue cat a mat house"},
       {"green 3.5 blue 3.5 house sat mat", "a mat fast, cat fast, on", "a tree. mat fast, cat green dog on the", "the fast, green mat the world!", "blue cat a mat house"},
       true,
       100.00000000000004},
      {"disjoint",
       {"zzz yyy xxx www", "zzz yyy xxx www", "zzz yyy xxx www"},
       {"the cat sat down quietly", "the cat sat down quietly", "the cat sat down quietly"},
       true,
       2.073372458021131},
      {"near_match",
       {"the cat sat on the mat today"},
       {"the dog sat on the mat today"},
       true,
       64.34588841607616},
      {"short",
       {"one two"},
       {"one two"},
       true,
       0.0},
      {"tiny",
       {"hi"},
       {"hi"},
       true,
       0.0},
      {"with_empty",
       {"", "the cat sat on the mat"},
       {"the dog ran", "the cat sat on the mat"},
       true,
       60.653065971263366},
      {"case_cased",
       {"The Cat Sat On The Mat"},
       {"the cat sat on the mat"},
       true,
       4.0583489434387365},
      {"case_lc",
       {"The Cat Sat On The Mat"},
       {"the cat sat on the mat"},
       false,
       100.00000000000004},
      {"brevity",
       {"the cat sat on"},
       {"the cat sat on the mat all day"},
       true,
       36.78794411714425},
      {"verbose",
       {"the cat sat on the mat all day long again"},
       {"the cat sat on"},
       true,
       26.269098944241588},
      {"random0",
       {"green tree. on 3.5 3.5", "ran sat 3.5", "the green a", "dog fast, a Hello sat on blue tree.", "sat dog blue house the", "the 3.5 mat cat house"},
       {"green dog fast, green 3.5", "tree. sat 3.5", "the green a", "dog fast, a Hello the ran blue tree.", "sat fast, fast, the the", "the on mat cat world!"},
       false,
       26.862742513256382},
      {"random1",
       {"Hello green cat a house cat fast, blue tree. the the sat", "green Hello", "sat a mat cat cat dog on", "Hello on tree. sat 3.5 world! fast,", "ran ran on the mat", "blue dog Hello the a tree. a cat tree.", "house house fast, fast, world! fast, green 3.5 the dog"},
       {"Hello green fast, dog Hello cat fast, blue house the blue the", "the Hello dog mat", "on 3.5 mat cat cat sat on", "Hello on tree. sat 3.5 a fast,", "ran ran on the mat", "blue cat Hello the a tree. a cat tree.", "house house fast, house world! cat green 3.5 the dog"},
       true,
       49.25374837890597},
      {"random2",
       {"a blue on house on mat tree. mat a Hello blue", "tree. dog house 3.5 house the cat Hello house cat dog", "sat a ran 3.5 ran world! 3.5 the a the a", "house mat sat world! green the dog", "world! cat ran the blue dog on"},
       {"a the house house on mat world! mat a dog sat", "tree. dog house dog house the cat Hello house cat dog", "sat a ran 3.5 ran world! house the a house a", "house mat sat world! on the dog", "blue cat ran the blue dog tree."},
       true,
       51.62283412554631},
      {"random3",
       {"world! ran a world!", "fast, fast, the sat ran a dog a 3.5 world! sat cat", "3.5 on a on a the cat on sat sat", "on the Hello dog fast, mat house", "world! mat sat fast, dog", "dog on cat dog the blue house dog Hello the", "dog world! the world! green ran", "the tree. on tree. ran 3.5"},
       {"blue cat a world!", "sat on the a ran world! dog a world! world! fast, cat", "3.5 on a cat a 3.5 cat on tree. sat", "sat the Hello green fast, mat house", "world! mat sat fast, dog house cat a cat dog", "dog the cat dog dog blue house tree. Hello 3.5", "dog world! the world! a ran a mat cat on ran world!", "the tree. world! tree. ran cat"},
       false,
       28.870403039399353},
      {"random4",
       {"dog fast, Hello mat a sat world! green tree. a ran sat", "fast, sat on a blue ran green Hello 3.5 sat on", "dog ran blue the the blue mat fast, world! green green house"},
       {"ran fast, Hello mat house the world! green tree. a ran sat", "fast, sat on a blue ran green Hello a sat on", "dog dog blue 3.5 ran mat mat fast, blue green green house"},
       true,
       54.57850266397186},
      {"random5",
       {"dog house a", "cat ran world! on dog", "tree. sat on blue", "on ran on green fast, cat green world! 3.5 the", "Hello 3.5 dog"},
       {"dog house 3.5", "cat ran world! on dog the cat 3.5 blue a", "tree. sat on blue", "on the on green fast, fast, green Hello blue the", "Hello fast, dog"},
       true,
       43.69816482336036},
      {"random6",
       {"ran 3.5 on mat on blue", "world! mat house mat tree. fast, world!", "fast, the blue world! on cat", "tree. a a mat mat world! 3.5 fast, house", "the world! a on ran sat dog on 3.5", "3.5 world! green a tree. mat house", "fast, blue house blue house cat blue the"},
       {"blue 3.5 on mat on blue", "house mat house mat tree. fast, world!", "fast, the blue world! on cat", "tree. house a Hello mat world! 3.5 fast, house", "green world! a on ran sat dog on 3.5", "3.5 world! green a tree. mat house", "fast, blue house blue house the blue the"},
       false,
       80.05342240038601},
      {"random7",
       {"mat fast, a", "world! 3.5 on cat", "tree. blue on a", "blue Hello world! mat fast, fast, blue Hello mat", "world! on a sat mat sat fast, on sat on"},
       {"mat fast, blue", "world! 3.5 dog cat", "dog blue on a", "blue Hello ran mat on fast, blue Hello mat", "world! sat a sat blue the fast, on sat on"},
       true,
       38.166427668110295},
      {"random8",
       {"fast, Hello world! 3.5", "a sat cat ran tree. blue house a the Hello blue", "fast, sat cat 3.5 a mat a on green house", "dog fast, sat Hello fast,", "mat sat tree. green a house a fast, house tree. on", "sat tree.", "dog"},
       {"fast, the world! 3.5", "sat sat cat ran tree. blue house a house house blue", "mat sat cat tree. a mat mat on green house", "dog fast, sat Hello fast, world! a world! world! a", "a sat tree. mat world! house Hello house house tree. on", "ran tree. dog cat", "dog house Hello"},
       true,
       37.24976457378535},
      {"random9",
       {"the Hello blue blue the a green on on the", "house fast, world!", "cat green blue 3.5 tree. tree. the green a 3.5 sat on"},
       {"the Hello a blue the a green on on the", "house fast, world!", "cat green the 3.5 sat tree. the green a 3.5 3.5 fast,"},
       false,
       60.56121522902869},
      {"random10",
       {"the blue world! 3.5 the green sat a", "green Hello mat mat", "tree. dog ran fast, mat mat on", "cat Hello the green mat cat"},
       {"the blue world! sat green green ran a", "green Hello mat 3.5", "tree. dog ran fast, mat fast, on", "blue Hello the world! mat cat"},
       true,
       44.71524955133709},
      {"random11",
       {"ran ran the on fast, cat dog", "sat blue cat", "green cat ran 3.5 ran the green on the", "cat on on the a", "tree. dog tree. sat green cat"},
       {"ran ran the green fast, cat dog", "sat blue cat", "3.5 mat ran 3.5 ran 3.5 green the the", "cat on blue the fast,", "tree. Hello ran sat green cat Hello ran a fast, on the"},
       true,
       21.39367091736105},
      {"punct",
       {"Hello, world! It's 3.5 degrees (outside)."},
       {"Hello, world! It's 3.4 degrees (outside)."},
       true,
       70.16879391277372},
  };
  return cases;
}

}  // namespace bleu_vectors
