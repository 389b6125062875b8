#pragma once

#include <string>
#include <vector>

#include "tbm/concept.hpp"
#include "tbm/dataset.hpp"
#include "tbm/gateway.hpp"

namespace tbm {

constexpr const char* kStopMarker = "###";

// Concept rendered with the prompt-facing key style the in-context examples
// teach ("Concept Name", ...). include_mapping=false drops Possible Responses
// and Response Mapping, the measurement-task form.
inline std::string concept_prompt_json(const concept_def& c, bool include_mapping = true) {
  ojson doc = ojson::object();
  doc["Concept Name"] = c.name;
  doc["Concept Description"] = c.description;
  doc["Concept Question"] = c.question;
  if (include_mapping) doc["Possible Responses"] = c.possible_responses;
  ojson guide = ojson::object();
  for (size_t i = 0; i < c.possible_responses.size(); ++i)
    guide[c.possible_responses[i]] = c.response_guide[i];
  doc["Response Guide"] = guide;
  if (include_mapping) {
    ojson mapping = ojson::object();
    for (size_t i = 0; i < c.possible_responses.size(); ++i) {
      if (c.response_mapping[i].na) mapping[c.possible_responses[i]] = "na";
      else mapping[c.possible_responses[i]] = c.response_mapping[i].value;
    }
    doc["Response Mapping"] = mapping;
  }
  return canonical_line(doc);
}

// One-line summary used in the "already have" and "rejected" lists.
inline std::string concept_summary_line(size_t index, const concept_def& c) {
  std::string out = std::to_string(index) + ". " + c.name + ":" + c.description +
                    ", possible responses: [";
  for (size_t i = 0; i < c.possible_responses.size(); ++i) {
    if (i) out += ", ";
    out += "\"" + c.possible_responses[i] + "\"";
  }
  out += "]";
  return out;
}

// ---- concept generation ----------------------------------------------------

inline const std::string kGenerateSystem = std::string(kGenerateMarker) + R"TBM(

Below we are given a text dataset with accompanying labels. Our task is to identify a concept in the text that could be associated with the label. This is because we want to find the main factors that can be used to explain the label.

To do this, we will examine a sample of texts that have different labels so that we can look at the different characteristics that exist for one label and compare it to another. Good concepts are those that separate texts with one label from another.

After looking at these texts and finding a difference, we will define a concept definition JSON
Each full concept definition comes with a concept name, description, question, response set, and response guide. The concept description provides an intuitive overview of the concept. The concept question is our tool for measuring the concept, this will be graded by a human annotator. The possible responses list the possible responses to the question and the response guide provides information on what each rating means. We also include a response mapping to help with data processing.

Below are some examples of concepts for different datasets.

1. A possible concept for a dataset assigning toxicity scores to social media texts
{"Concept Name": "explicit language",
"Concept Description": "'Explicit language' refers to the use of words, phrases, or expressions that are offensive, vulgar, or inappropriate for general audiences. This may include profanity, obscenities, slurs, sexually explicit or lewd language, and derogatory or discriminatory terms targeted at specific groups or individuals.",
"Concept Question": "What is the nature of the language used in the text?",
"Possible Responses": ["explicit", "strong", "non-explicit", "uncertain"],
"Response Guide": {
"explicit": "The text contains explicit language, such as profanity, obscenities, slurs, sexually explicit or lewd language, or derogatory terms targeted at specific groups or individuals.",
"strong": "The text contains strong language but not explicit language, it may contain terms that some viewers might find mature.",
"non-explicit": "The text is free from explicit language and is appropriate for general audiences.",
"uncertain": "It is difficult to determine the nature of the language used in the text or if any explicit terms are used."
},
"Response Mapping": {
"explicit": 2,
"strong": 1,
"non-explicit": -1,
"uncertain": 0
}
}###

2. A possible concept for evaluating the sentiment of product reviews on ecommerce site
{"Concept Name": "good build quality",
"Concept Description": "Build quality refers to the craftsmanship, durability, and overall construction of a product. It encompasses aspects such as materials used, design, manufacturing techniques, and attention to detail. A product with good build quality is typically considered to be well-made, sturdy, and long-lasting, while a product with poor build quality may be prone to defects or wear out quickly.",
"Concept Question": "What does the review say about the build quality of the product?",
"Possible Responses": ["high", "low", "uncertain", "not applicable"],
"Response Guide": {
"high": "Review mentions aspects such as well-made, sturdy, durable, high-quality materials, excellent craftsmanship, etc.",
"low": "Review mentions aspects such as poor construction, flimsy, cheap materials, bad design, easily breakable, etc.",
"uncertain": "Review does not mention build quality, the information is ambiguous or vague, or it has both positive and negative aspects mentioned like 'the product is sturdy but uses cheap materials'.",
"not applicable": "The review does not mention the build quality of the product at all."
},
"Response Mapping": {
"high": 1,
"low": -1,
"uncertain": 0,
"not applicable": 0
}
}###

3. A useful concept for scam detection for emails
{
"Concept Name": "Extremely generous offer",
"Concept Description": "The concept 'Extremely generous offer' refers to situations where the text describes an offer that seems too good to be true, such as promises of large financial gains, disproportionate rewards, or substantial benefits with seemingly little to no risk or effort required. These can often be indicative of scams or deceptive practices.",
"Concept Question": "What type of offer is described in the text?",
"Possible Responses": ["extremely generous offer", "ordinary offer", "no offer", "uncertain"],
"Response Guide": {
"extremely generous offer": "The text describes an offer that is disproportionately rewarding or beneficial with seemingly little to no risk or effort. This could include promises of large financial returns with minimal investment, 'free' gifts that require payment information, or rewards that are disproportionate to the effort required.",
"ordinary offer": "The text describes a typical or ordinary offer. For instance, normal sales or discounts, standard business offerings, or fair trades.",
"no offer": "The text does not describe any offer.",
"uncertain": "It is difficult to determine the type of offer described in the text. The text might be vague, ambiguous, or lack sufficient context."
},
"Response Mapping": {
"extremely generous offer": 1,
"ordinary offer": -2,
"no offer": -1,
"uncertain": 0
}
}
)TBM";

inline chat_request build_generate_prompt(const dataset& meta,
                                          const std::vector<example>& hard_examples,
                                          const std::vector<concept_def>& accepted,
                                          const std::vector<concept_def>& rejected) {
  ojson guide = ojson::object();
  for (const auto& [k, v] : meta.label_guide) guide[k] = v;

  std::string user;
  user += "In the task, we will generate concepts for the " + meta.name + " dataset\n\n";
  user += "Below is an explanation of the dataset and the labels therein:\n\n";
  user += "Description: " + meta.description + "\n\n";
  user += "Label guide: " + canonical_line(guide) + "\n\n";
  user += "Below are some example texts along with their labels.\n---\n";
  for (const auto& ex : hard_examples)
    user += "text:" + ex.text + "\nrating: " + ex.label.display() + "\n";
  user += "---\n";
  if (!accepted.empty()) {
    user += "As a reminder we already have the following concepts which are useful:\n";
    for (size_t i = 0; i < accepted.size(); ++i)
      user += concept_summary_line(i + 1, accepted[i]) + "\n";
    user += "\n";
  }
  if (!rejected.empty()) {
    user += "The following concepts have been rejected by the system, avoid making similar ones:\n";
    for (size_t i = 0; i < rejected.size(); ++i)
      user += concept_summary_line(i + 1, rejected[i]) + "\n";
    user += "\n";
  }
  user +=
      "Keeping in mind the pointers above, create a concept below that is distinct from the "
      "current set of concepts. Additionally, make sure that all possible responses can be "
      "mapped to an integer.\n";
  user += "Make sure that the concept is as relevant to the labels in the " + meta.name +
          " dataset. As the examples shown start to look more similar, we can start being more "
          "specific, picking out particular details tied to the label we notice in the examples "
          "above.\n\nDefinition: {";

  chat_request req;
  req.system_text = kGenerateSystem;
  req.user_text = user;
  req.temperature = 0.0;
  req.max_output_tokens = 1024;
  req.stop_marker = kStopMarker;
  return req;
}

// ---- concept improvement ---------------------------------------------------

inline const std::string kRefineSystem = std::string(kRefineMarker) + R"TBM(

We have a concept that needs to be improved. The goal of this task is to identify any issues with the current concept and suggest improvements to make it more valid, clear, well-phrased, and properly formatted in JSON. The concept should be designed for a positive/negative/uncertain question format that maps to 1, -1, and 0 respectively.
In this task, we will return information about any potential problems in the concept along with the improved concept.
Note it is also possible that the concept requires no further improvement (even minor ones), in which case, we will return the original concept with "None" for the other responses.

Consider the following error cases while improving the concept:

1. Lack of validity: Ensure that the responses are mutually exclusive and collectively exhaustive.
- Example of a concept that is not mutually exclusive:
Input JSON:
{
"Concept Name": "review sentiment",
"Concept Description": "The sentiment expressed towards the product in the review. It could be positive, negative, or neutral.",
"Concept Question": "What is the overall feeling towards the product?",
"Possible Responses": ["positive", "somewhat positive", "negative"],
"Response Guide": {
"positive": "The reviewer expresses a positive opinion on the product, such as praising its quality, performance, or value.",
"somewhat positive": "The reviewer expresses a somewhat positive opinion on the product, such as mentioning some good aspects but also pointing out some flaws.",
"negative": "The reviewer expresses a negative opinion on the product, such as criticizing its quality, performance, or value."
},
"Response Mapping": {
"positive": 1,
"somewhat positive": 0.5,
"negative": -1
}
}
Response: {
"Confirmation":"1. Mutual Exclusivity: The concept above contains non-mutually exclusive responses 'positive' and 'somewhat positive'
2. Collectively Exhaustive: clear
3. No leading questions: clear
4. Rich and objective response guide: clear
5. Interference with other concepts: clear
6. Invalid response set: clear",
"Errors": "The concept above contains non-mutually exclusive responses 'positive' and 'somewhat positive'",
"Fix": "We can address this by either combining 'positive' and 'somewhat positive' into a single response or defining clearer distinctions between them.",
"New Concept": {
"Concept Name": "review sentiment",
"Concept Description": "The sentiment expressed towards the product in the review. It could be positive, negative, or neutral.",
"Concept Question": "What is the overall sentiment expressed towards the product in the review?",
"Possible Responses": ["positive", "negative", "neutral"],
"Response Guide": {
"positive": "The reviewer expresses a positive opinion on the product, such as praising its quality, performance, or value.",
"negative": "The reviewer expresses a negative opinion on the product, such as criticizing its quality, performance, or value.",
"neutral": "The reviewer does not express a clear positive or negative opinion on the product, or the review contains a mix of positive and negative aspects."
},
"Response Mapping": {
"positive": 1,
"negative": -1,
"neutral": 0
}
}
}###

- Example of a concept that is not collectively exhaustive:
Input JSON:
{
"Concept Name": "product availability",
"Concept Description": "The availability of the product as described in the review.",
"Concept Question": "Is the product available?",
"Possible Responses": ["available", "unavailable"],
"Response Guide": {
"available": "The reviewer mentions that the product is available, in stock, or easy to find.",
"unavailable": "The reviewer mentions that the product is unavailable, out of stock, or hard to find."
},
"Response Mapping": {
"available": 1,
"unavailable": -1
}
}
Response: {
"Confirmation": "1. Mutual Exclusivity: clear
2. Collectively Exhaustive: The concept above contains a non-collectively exhaustive response set
3. No leading questions: clear
4. Rich and objective response guide: clear
5. Interference with other concepts: clear
6. Invalid response set: clear",
"Errors": "The concept above contains a non-collectively exhaustive response set because it may be possible that a piece of text does not strictly match some criteria in the response guide,",
"Fix": "We can address this by adding a 'uncertain' response to cover cases where the availability is not clearly mentioned, and a 'not applicable' response for cases where the text does not discuss a product.",
"New Concept": {
"Concept Name": "product availability",
"Concept Description": "The availability of the product as described in the review.",
"Concept Question": "What does the review say about the product's availability?",
"Possible Responses": ["available", "unavailable", "uncertain", "not applicable"],
"Response Guide": {
"available": "The reviewer mentions that the product is available, in stock, or easy to find.",
"unavailable": "The reviewer mentions that the product is unavailable, out of stock, or hard to find.",
"uncertain": "The review contains mixed information or no information that makes it difficult to determine the availability of the product.",
"not applicable": "The reviewer is not discussing a product or anything else that could be described by this concept."
},
"Response Mapping": {
"available": 1,
"unavailable": -1,
"uncertain": 0,
"not applicable": "na"
}
}
}###

2. Poor phrasing: Avoid leading questions and provide rich examples in the response guide.
- Example of a leading question:
Input JSON:
{
"Concept Name": "product cost",
"Concept Description": "The cost of the product as described in the review.",
"Concept Question": "Is the product expensive?",
"Possible Responses": ["expensive", "affordable", "uncertain", "not applicable"],
"Response Guide": {
"expensive": "The reviewer thinks the product is expensive.",
"affordable": "The reviewer thinks the product is affordable.",
"uncertain": "The reviewer does not provide a clear opinion on the product's cost.",
"not applicable": "The reviewer is not discussing a product or anything else that could be described by this concept."
},
"Response Mapping": {
"expensive": 1,
"affordable": -1,
"uncertain": 0,
"not applicable": "na"
}
}
Response: {
"Confirmation":"1. Mutual Exclusivity: clear
2. Collectively Exhaustive: clear
3. No leading questions: The question may potentially be leading, "Is the product expensive?" leads the responder to a positive response.
4. Rich and objective response guide: The response guide is not very rich or objective. The responses guides for each answer are very similar, only differing by a few words and without providing examples.
5. Interference with other concepts: clear
6. Invalid response set: clear",
"Errors": "The concept contains a leading question and a bad response guide",
"Fix": "We can address this by changing the question to be more neutral and asking about the reviewer's description of the product's cost.",
"New Concept": {
"Concept Name": "product cost",
"Concept Description": "The cost of the product as described in the review, in terms of whether the product is perceived as expensive or affordable.",
"Concept Question": "How does the reviewer describe the cost of the product?",
"Possible Responses": ["expensive", "affordable", "uncertain", "not applicable"],
"Response Guide": {
"expensive": "The reviewer describes the product as costly, high-priced, or not worth the money.",
"affordable": "The reviewer describes the product as reasonably priced, good value for money, or budget-friendly.",
"uncertain": "The reviewer does not provide a clear opinion or information on the product's cost.",
"not applicable": "The reviewer is not discussing a product or anything else that could be described by this concept."
},
"Response Mapping": {
"expensive": 1,
"affordable": -1,
"uncertain": 0,
"not applicable": "na"
}
}
}###

In addition to the errors above, some other problems could be:

1. The concept contains responses not in {1, 0, -1, "na"}. This can be fixed by shrinking the possible set of responses.
2. Lack of detail in the response guide. As much as possible, the response guide should contain detailed examples. This issue can be fixed by making the response guide more specific to allow annotators to be more objective about answering the question.
)TBM";

inline chat_request build_refine_prompt(const std::string& candidate_json) {
  chat_request req;
  req.system_text = kRefineSystem;
  req.user_text = "---\nBelow is the concept for you to improve.\n" + candidate_json + "\nResponse:{";
  req.temperature = 0.0;
  req.max_output_tokens = 1024;
  req.stop_marker = kStopMarker;
  return req;
}

// ---- concept measurement ---------------------------------------------------

inline const std::string kMeasureSystem = std::string(kMeasureMarker) + R"TBM( about the texts below by selecting from the following choices. Before answering the question, extract any potentially relevant snippets of the text that can serve as evidence for each classification. After that, compare the snippets against the response guide to come up with a final decision.

Format your response as a list of JSON objects with string keys and string values. Below is an example of a valid JSON response. Each JSON object contains keys for snippets, thoughts, and answer. End your response with ###
---
Text 1: Text
Text 2: Text
Text 3: Text

Response JSON:[
{"text": "Text 1", "snippets": {
"classification 1" : ["Snippet 1", "Snippet 2", ...],
"classification 2" : ["Snippet 3", "Snippet 4", ...]
...
},
"thoughts": "In this section, you weigh evidence based on the text and the extracted snippets to come to a final decision with the response guide as a reference. Be as objective as possible and ignore irrelevant information. Focus only on the snippets and avoid making guesses.",
"answer": "An answer from the response guide goes here. In answering the question, ignore irrelevant information and avoid making assumptions."},
{"text": "Text 2", "snippets": {
"classification 1" : ["Snippet 1", "Snippet 2", ...],
"classification 2" : ["Snippet 3", "Snippet 4", ...]
...
},
"thoughts": "...",
"answer": "..."},
{"text": "Text 3", "snippets": {
"classification 1" : ["Snippet 1", "Snippet 2", ...],
"classification 2" : ["Snippet 3", "Snippet 4", ...]
...
}
]###
---
Below is an example of the task being performed with the concept "build quality":

Concept:
{
"Concept Name": "good build quality",
"Concept Description": "build quality refers to the craftsmanship, durability, and overall construction of a product. It encompasses aspects such as materials used, design, manufacturing techniques, and attention to detail. A product with good build quality is typically considered to be well-made, sturdy, and long-lasting, while a product with poor build quality may be prone to defects or wear out quickly.",
"Concept Question": "What does the review say about the build quality of the product?",
"Possible Responses": ["high", "low", "uncertain", "not applicable"],
"Response Guide": {
"high": "Review mentions aspects such as well-made, sturdy, durable, high-quality materials, excellent craftsmanship, etc.",
"low": "Review mentions aspects such as poor construction, flimsy, cheap materials, bad design, easily breakable, etc.",
"uncertain": "Review does not mention build quality, the information is ambiguous or vague, or it has both positive and negative aspects mentioned like 'the product is sturdy but uses cheap materials'.",
"not applicable": "The review does not mention the build quality of the product at all."
}
}

Text 1: "This product has a great design and is really easy to use. It is also very durable."
Text 2: "Was excited for it to finally arrive, got here in nice sturdy packaging. Opened it up though and it smelled kind of weird? goes away after a while but otherwise an ok product. Saw some print aberrations it didn't interfere much with use."
Text 3: "A big fan of the product. Serves me well during workouts but I go through them like hotcakes. Don't expect it to last long compared to other brands but you get what you pay for. It does the job though."
Text 4: "Very disappointing. I was excited to order this but when it arrived I was shocked at how poorly it worked. Deceptive advertising at its finest."

Response JSON:[
{"text": "Text 1", "snippets": {
"high": ["It is also very durable", "really easy to use"],
"low": [],
"uncertain": []
},
"thoughts": "Two snippets for high. The first is related to durability which is an aspect of good build quality. The second is related to ease of use which is not related to good build quality. Overall the text describes good build quality..",
"answer": "high"},

{"text": "Text 2", "snippets": {
"high": ["got here in nice sturdy packaging"],
"low": ["Saw some print aberrations"],
"uncertain": []
},
"thoughts": "One snippet for high, one snippet for low. The low snippet mentions defects in manufacturing. In the high snippet, 'Sturdy' only refers to the packaging, not the product. The balance of evidence leans towards a classification of low.",
"answer": "low"},

{"text": "Text 3", "snippets":
{
"high": ["Serves me well during workouts"],
"low": ["Don't expect it to last long compared to other brands", "I go through them like hotcakes"],
"uncertain": ["you get what you pay for"]
},
"thoughts": "One high snippet, two low snippets, one uncertain snippet. The high snippet is about utility which is not related to build quality. The low snippet relates to durability, an aspect of build quality.",
"answer": "low"},

{"text": "Text 4", "snippets":
{
"high": [],
"low": ["Very disappointing", "shocked at how poorly it worked", "Deceptive advertising"],
"uncertain": []
},
"thoughts": "Three low spans. The first is related to overall judgment which is irrelevant, the second is related to functionality which is irrelevant, and the third is related to marketing/advertising which is also irrelevant. None are related to build quality.",
"answer": "uncertain"
}
]###
---)TBM";

// Builds the measurement request for one batch of texts, shrinking the texts
// until the whole prompt fits the context budget.
inline chat_request build_measurement_prompt(const concept_def& c, std::vector<std::string> texts,
                                             int context_token_limit) {
  auto assemble = [&](const std::vector<std::string>& ts) {
    std::string user;
    user +=
        "Perform the task below, keeping in mind to limit snippets to 10 words and ignoring "
        "irrelevant information. Return a valid list of JSON objects ending with ###\n";
    user += "Concept: " + concept_prompt_json(c, false) + "\n\n";
    for (size_t i = 0; i < ts.size(); ++i)
      user += "Text " + std::to_string(i + 1) + ": " + ts[i] + "\n";
    user += "\nResponse JSON:[";
    chat_request req;
    req.system_text = kMeasureSystem;
    req.user_text = user;
    req.temperature = 0.0;
    req.max_output_tokens = 2048;
    req.stop_marker = kStopMarker;
    return req;
  };

  chat_request req = assemble(texts);
  for (int round = 0; round < 8 && estimate_tokens(req) > context_token_limit; ++round) {
    int text_tokens = 0;
    for (const auto& t : texts) text_tokens += estimate_tokens(t);
    int overhead = estimate_tokens(req) - text_tokens;
    int budget = context_token_limit - overhead;
    if (budget < static_cast<int>(texts.size()))
      fail(errc::budget_unreachable, "measurement prompt overhead exceeds context limit");
    texts = truncate_to_budget(std::move(texts), budget);
    req = assemble(texts);
  }
  if (estimate_tokens(req) > context_token_limit)
    fail(errc::budget_unreachable, "measurement prompt cannot fit context limit");
  return req;
}

// ---- concept quality audit -------------------------------------------------

inline constexpr const char* kAuditMarker = "Concept Quality Audit Task";

inline const std::string kAuditSystem = std::string(kAuditMarker) + R"TBM(

You will rate the quality of one concept that a model uses to analyze texts from a dataset. Rate every aspect with an integer:

redundancy: 1 = the concept is distinct from the other concepts in the model, 2 = it duplicates one of them.
relevance: 1 = the concept plausibly relates to the dataset labels, 2 = it has no plausible connection to them.
leakage: 1 = the concept describes evidence found in the text, 2 = it merely restates the label itself.
objectivity: 1 = two careful readers would usually give the same response, 2 = responses are largely a matter of taste.
difficulty: 1 = responses are obvious from the text alone, 2 = responses require some judgment, 3 = responses require outside knowledge.

Respond with a single JSON object holding exactly these five keys and integer values, ending with ###)TBM";

inline chat_request build_audit_prompt(const dataset& meta, const concept_def& c,
                                       const std::vector<concept_def>& others, int rater) {
  std::string user;
  user += "Rater " + std::to_string(rater) + "\n\n";
  user += "Dataset: " + meta.name + "\n";
  user += "Description: " + meta.description + "\n\n";
  if (!others.empty()) {
    user += "Other concepts in the model:\n";
    for (size_t i = 0; i < others.size(); ++i)
      user += concept_summary_line(i + 1, others[i]) + "\n";
    user += "\n";
  }
  user += "Concept to audit:\n" + concept_prompt_json(c, true) + "\n\n";
  user += "Ratings JSON: {";
  chat_request req;
  req.system_text = kAuditSystem;
  req.user_text = user;
  req.temperature = 0.0;
  req.max_output_tokens = 256;
  req.stop_marker = kStopMarker;
  return req;
}

}  // namespace tbm
