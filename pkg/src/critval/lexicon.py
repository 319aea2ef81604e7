"""Default rule book for funnel-stage, rejection and purchase-link detection.

These keyword lists were written for this package (Chinese and English); they
are a starting point, not a validated detector. Supply your own rule file for
real transcripts.
"""

DEFAULT_RULES = {
    "case_fold": True,
    "stages": {
        "F6": [
            {"kind": "keyword", "pattern": "下单"},
            {"kind": "keyword", "pattern": "付款"},
            {"kind": "keyword", "pattern": "支付"},
            {"kind": "keyword", "pattern": "购买链接"},
            {"kind": "keyword", "pattern": "名额"},
            {"kind": "keyword", "pattern": "优惠截止"},
            {"kind": "regex", "pattern": r"\b(sign up now|checkout|pay now|place (your|the) order|limited spots?)\b"},
            {"kind": "regex", "pattern": r"https?://\S*(pay|order|buy|checkout)"},
        ],
        "F5": [
            {"kind": "keyword", "pattern": "您担心"},
            {"kind": "keyword", "pattern": "理解您的顾虑"},
            {"kind": "keyword", "pattern": "退款保障"},
            {"kind": "keyword", "pattern": "不满意可以"},
            {"kind": "regex", "pattern": r"\b(i understand your concern|money[- ]back|refund policy|guarantee)\b"},
        ],
        "F4": [
            {"kind": "keyword", "pattern": "我们的服务"},
            {"kind": "keyword", "pattern": "会员"},
            {"kind": "keyword", "pattern": "套餐"},
            {"kind": "keyword", "pattern": "价格"},
            {"kind": "regex", "pattern": r"\b(our (service|package|plan)|membership|pricing|price|costs?)\b"},
        ],
        "F3": [
            {"kind": "keyword", "pattern": "年纪不小"},
            {"kind": "keyword", "pattern": "越拖越"},
            {"kind": "keyword", "pattern": "着急"},
            {"kind": "keyword", "pattern": "错过"},
            {"kind": "regex", "pattern": r"\b(getting older|running out of time|don't want to miss|worried about)\b"},
        ],
        "F2": [
            {"kind": "keyword", "pattern": "请问"},
            {"kind": "keyword", "pattern": "孩子今年"},
            {"kind": "keyword", "pattern": "什么要求"},
            {"kind": "keyword", "pattern": "在哪里工作"},
            {"kind": "regex", "pattern": r"\b(what are you looking for|how old is|may i ask|what kind of|requirements?)\b"},
        ],
        "F1": [
            {"kind": "keyword", "pattern": "您好"},
            {"kind": "keyword", "pattern": "你好"},
            {"kind": "keyword", "pattern": "很高兴"},
            {"kind": "regex", "pattern": r"\b(hello|hi|good (morning|afternoon|evening)|nice to meet you)\b"},
        ],
    },
    "rejections": {
        "terminal": [
            {"kind": "keyword", "pattern": "别再联系"},
            {"kind": "keyword", "pattern": "不要再联系"},
            {"kind": "keyword", "pattern": "再发就举报"},
            {"kind": "keyword", "pattern": "拉黑"},
            {"kind": "regex", "pattern": r"\b(do not|don't) (contact|message|text) me( again)?\b"},
            {"kind": "regex", "pattern": r"\b(stop (messaging|texting|contacting) me|i will report you|blocking you)\b"},
        ],
        "hard": [
            {"kind": "keyword", "pattern": "不需要"},
            {"kind": "keyword", "pattern": "不感兴趣"},
            {"kind": "keyword", "pattern": "别推销"},
            {"kind": "regex", "pattern": r"\b(not interested|no thanks|i said no|stop selling)\b"},
        ],
        "soft": [
            {"kind": "keyword", "pattern": "再考虑"},
            {"kind": "keyword", "pattern": "以后再说"},
            {"kind": "keyword", "pattern": "太贵"},
            {"kind": "keyword", "pattern": "先不"},
            {"kind": "regex", "pattern": r"\b(maybe later|let me think|too expensive|not now|not right now)\b"},
        ],
    },
    "links": [
        {"kind": "regex", "pattern": r"https?://"},
        {"kind": "keyword", "pattern": "链接"},
        {"kind": "keyword", "pattern": "价格"},
        {"kind": "keyword", "pattern": "下单"},
        {"kind": "keyword", "pattern": "购买"},
        {"kind": "regex", "pattern": r"\b(link|price|buy|purchase|order now)\b"},
        {"kind": "regex", "pattern": r"[¥￥$]\s?\d"},
    ],
}
